#include <doctest.h>

#include <stdexcept>

#include "oat/config.hpp"

using oat::config::ExperimentConfig;

TEST_CASE("config parses key = value lines with comments") {
  auto cfg = ExperimentConfig::from_text(
      "# a comment\n"
      "mode = oat-a\n"
      "train.base_lr = 0.1  # trailing comment\n"
      "\n"
      "seed = 7\n");
  CHECK(cfg.get_string("mode", "standard") == "oat-a");
  CHECK(cfg.get_double("train.base_lr", 0.0) == 0.1);
  CHECK(cfg.get_u64("seed", 0) == 7);
  cfg.ensure_all_consumed();
}

TEST_CASE("unknown keys are hard errors") {
  auto cfg = ExperimentConfig::from_text("mode = standard\nmisspelled = 3\n");
  CHECK(cfg.get_string("mode", "standard") == "standard");
  CHECK_THROWS_AS(cfg.ensure_all_consumed(), std::invalid_argument);
}

TEST_CASE("overrides replace file values") {
  auto cfg = ExperimentConfig::from_text("seed = 1\n");
  cfg.set("seed", "9");
  CHECK(cfg.get_u64("seed", 0) == 9);
}

TEST_CASE("resolved text includes defaults that were consulted") {
  auto cfg = ExperimentConfig::from_text("mode = pgd\n");
  cfg.get_string("mode", "standard");
  cfg.get_double("attack.eps", 8.0 / 255.0);
  const auto text = cfg.resolved_text();
  CHECK(text.find("mode = pgd") != std::string::npos);
  CHECK(text.find("attack.eps = ") != std::string::npos);
}

TEST_CASE("malformed values and lines are rejected") {
  CHECK_THROWS_AS(ExperimentConfig::from_text("just a line\n"), std::invalid_argument);
  auto cfg = ExperimentConfig::from_text("train.base_lr = fast\nflag = maybe\nn = 1.5\n");
  CHECK_THROWS_AS(cfg.get_double("train.base_lr", 0.1), std::invalid_argument);
  CHECK_THROWS_AS(cfg.get_bool("flag", false), std::invalid_argument);
  CHECK_THROWS_AS(cfg.get_int("n", 0), std::invalid_argument);
}

TEST_CASE("missing required keys are reported by name") {
  auto cfg = ExperimentConfig::from_text("");
  CHECK_THROWS_WITH_AS(cfg.require_string("data.train"),
                       "config: missing required key `data.train`", std::invalid_argument);
}

TEST_CASE("lists split on commas") {
  auto cfg = ExperimentConfig::from_text("eval.attacks = PGD20, CW20\n");
  const auto v = cfg.get_list("eval.attacks", {});
  REQUIRE(v.size() == 2);
  CHECK(v[0] == "PGD20");
  CHECK(v[1] == "CW20");
  const auto d = cfg.get_list("other.list", {"a", "b"});
  REQUIRE(d.size() == 2);
  CHECK(d[0] == "a");
}
