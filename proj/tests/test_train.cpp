#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oat/dataset.hpp"
#include "oat/train.hpp"

using namespace oat;
using namespace oat::train;

namespace {

// Small, quickly learnable synthetic data shared by the trainer tests.
data::SynthData quick_data(std::size_t n_train = 256, std::size_t n_ood = 256) {
  data::SynthSpec spec;
  spec.num_classes = 4;
  spec.channels = 3;
  spec.height = 8;
  spec.width = 8;
  spec.num_nuisance = 8;
  spec.n_train = n_train;
  spec.n_test = 128;
  spec.n_ood = n_ood;
  Rng rng(2024, 0);
  return gen_synthetic(spec, rng);
}

nn::ModelSpec mlp_spec(const data::Dataset& d, std::vector<int> hidden = {16}) {
  nn::ModelSpec spec;
  spec.kind = nn::ModelKind::mlp;
  spec.channels = d.channels;
  spec.height = d.height;
  spec.width = d.width;
  spec.hidden = std::move(hidden);
  spec.num_classes = d.num_classes;
  return spec;
}

attack::AttackConfig train_attack(double eps = 8.0 / 255.0) {
  attack::AttackConfig atk;
  atk.eps = eps;
  atk.steps = 3;
  atk.step_size = 4.0 / 255.0;
  atk.random_start = true;
  return atk;
}

}  // namespace

TEST_CASE("train_standard drives a separable toy problem to zero train error") {
  // Two classes split by the first pixel.
  data::Dataset d;
  d.channels = 1;
  d.height = 2;
  d.width = 2;
  d.num_classes = 2;
  d.labels.resize(64);
  d.images.resize(64 * 4);
  Rng rng(5, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool hi = i % 2 == 0;
    d.labels[i] = hi ? 1 : 0;
    d.images[i * 4] = hi ? 220 : 30;
    for (int j = 1; j < 4; ++j) d.images[i * 4 + j] = static_cast<std::uint8_t>(rng.uniform_index(256));
  }

  nn::TrainConfig cfg;
  cfg.base_lr = 0.5;
  cfg.total_steps = 200;
  cfg.batch_size = 32;
  cfg.weight_decay = 0.0;
  EvalPlan plan;  // no test set: train-side metrics only
  Rng trng(6, 0);
  const auto result = train_standard(mlp_spec(d, {8}), d, cfg, plan, trng);
  REQUIRE_FALSE(result.metrics.rows.empty());
  CHECK(result.metrics.rows.back().train_err == 0.0);
}

TEST_CASE("identical seed and config reproduce byte-identical metrics") {
  const auto data = quick_data();
  nn::TrainConfig cfg;
  cfg.base_lr = 0.05;
  cfg.total_steps = 60;
  cfg.batch_size = 16;
  EvalPlan plan;
  plan.test = &data.test;
  plan.attacks = {"PGD10"};
  plan.robust_subset = 32;
  plan.every_epochs = 2;

  Rng r1(42, 0), r2(42, 0);
  const auto a = train_standard(mlp_spec(data.train), data.train, cfg, plan, r1);
  const auto b = train_standard(mlp_spec(data.train), data.train, cfg, plan, r2);
  CHECK(a.metrics.to_csv() == b.metrics.to_csv());
  CHECK(a.model.params == b.model.params);
}

TEST_CASE("pgd training with eps 0 matches standard training step for step") {
  const auto data = quick_data();
  nn::TrainConfig cfg;
  cfg.base_lr = 0.05;
  cfg.total_steps = 40;
  cfg.batch_size = 16;
  EvalPlan plan;
  plan.test = &data.test;
  plan.attacks = {"PGD10"};
  plan.robust_subset = 32;

  Rng r1(7, 0), r2(7, 0);
  const auto std_run = train_standard(mlp_spec(data.train), data.train, cfg, plan, r1);
  const auto pgd_run =
      train_pgd_at(mlp_spec(data.train), data.train, cfg, train_attack(0.0), plan, r2);
  CHECK(std_run.metrics.to_csv() == pgd_run.metrics.to_csv());
}

TEST_CASE("trades with beta 0 matches standard training") {
  const auto data = quick_data();
  nn::TrainConfig cfg;
  cfg.base_lr = 0.05;
  cfg.total_steps = 40;
  cfg.batch_size = 16;
  EvalPlan plan;
  plan.test = &data.test;

  Rng r1(8, 0), r2(8, 0);
  const auto std_run = train_standard(mlp_spec(data.train), data.train, cfg, plan, r1);
  auto atk = train_attack();
  atk.loss = nn::LossKind{nn::LossKind::kl, 0.0};
  const auto trades_run =
      train_trades(mlp_spec(data.train), data.train, cfg, atk, 0.0, plan, r2);
  CHECK(std_run.metrics.to_csv() == trades_run.metrics.to_csv());
}

TEST_CASE("trades rejects a non-kl attack loss when beta > 0") {
  const auto data = quick_data(64, 64);
  nn::TrainConfig cfg;
  cfg.total_steps = 4;
  cfg.batch_size = 8;
  EvalPlan plan;
  Rng rng(9, 0);
  CHECK_THROWS_AS(
      train_trades(mlp_spec(data.train), data.train, cfg, train_attack(), 1.0, plan, rng),
      std::invalid_argument);
}

TEST_CASE("trades kl inner maximization vanishes at eps 0") {
  const auto data = quick_data(64, 64);
  nn::TrainConfig cfg;
  cfg.base_lr = 0.05;
  cfg.total_steps = 6;
  cfg.batch_size = 8;
  EvalPlan plan;
  auto atk = train_attack(0.0);
  atk.loss = nn::LossKind{nn::LossKind::kl, 0.0};

  // With eps = 0 the kl term contributes exactly nothing, so a beta = 6 run
  // reproduces the standard run.
  Rng r1(10, 0), r2(10, 0);
  const auto a = train_trades(mlp_spec(data.train), data.train, cfg, atk, 6.0, plan, r1);
  const auto b = train_standard(mlp_spec(data.train), data.train, cfg, plan, r2);
  CHECK(a.metrics.to_csv() == b.metrics.to_csv());
}

TEST_CASE("OAT step weighting matches the independent two-pass oracle within 1e-9") {
  const auto data = quick_data();
  nn::TrainConfig cfg;
  cfg.base_lr = 0.1;
  cfg.total_steps = 10;
  cfg.batch_size = 16;
  cfg.momentum = 0.9;  // buffer starts at zero, first step is g + wd*theta
  cfg.weight_decay = 2e-4;

  for (const auto mode : {OatConfig::Mode::S, OatConfig::Mode::A}) {
    OatConfig oat;
    oat.mode = mode;
    oat.alpha = 0.7;
    oat.attack = train_attack();

    Rng build_rng(11, 0);
    nn::Model model = nn::build_model(mlp_spec(data.train), build_rng);
    const auto params0 = model.params;
    Rng step_rng(12, 0);
    const auto trace = oat_single_step(model, data.train, data.ood, cfg, oat, step_rng);

    // Independent recombination from the traced half-batches, evaluated at
    // the pre-step parameters.
    nn::Model at0 = model;
    at0.params = params0;
    const auto res_t = nn::loss_and_grads(at0, trace.target_batch,
                                          nn::Targets::from_hard(trace.target_labels),
                                          nn::LossKind{nn::LossKind::ce_hard, 0.0}, {true, false});
    std::vector<std::vector<double>> unif(
        trace.ood_batch.n, data::uniform_label(static_cast<std::size_t>(data.train.num_classes)).values);
    const auto res_o = nn::loss_and_grads(at0, trace.ood_batch,
                                          nn::Targets::from_soft(unif),
                                          nn::LossKind{nn::LossKind::ce_soft, 0.0}, {true, false});
    for (std::size_t i = 0; i < params0.size(); ++i) {
      const double g = 0.5 * res_t.param_grads[i] + 0.5 * oat.alpha * res_o.param_grads[i];
      REQUIRE(std::isfinite(g));
      const double expected_delta = -trace.lr * (g + cfg.weight_decay * params0[i]);
      const double actual_delta = trace.params_after[i] - trace.params_before[i];
      CHECK(std::abs(actual_delta - expected_delta) < 1e-9);
    }
  }
}

TEST_CASE("OAT-S with alpha 0 steps by half of the standard gradient") {
  const auto data = quick_data();
  nn::TrainConfig cfg;
  cfg.base_lr = 0.1;
  cfg.total_steps = 10;
  cfg.batch_size = 16;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  OatConfig oat;
  oat.mode = OatConfig::Mode::S;
  oat.alpha = 0.0;

  Rng build_rng(13, 0);
  nn::Model model = nn::build_model(mlp_spec(data.train), build_rng);
  const auto params0 = model.params;
  Rng step_rng(14, 0);
  const auto trace = oat_single_step(model, data.train, data.ood, cfg, oat, step_rng);

  nn::Model at0 = model;
  at0.params = params0;
  const auto res_t = nn::loss_and_grads(at0, trace.target_batch,
                                        nn::Targets::from_hard(trace.target_labels),
                                        nn::LossKind{nn::LossKind::ce_hard, 0.0}, {true, false});
  for (std::size_t i = 0; i < params0.size(); ++i) {
    const double delta = trace.params_after[i] - trace.params_before[i];
    CHECK(delta == doctest::Approx(-cfg.base_lr * 0.5 * res_t.param_grads[i]).epsilon(1e-12));
  }
}

TEST_CASE("train_oat validates batch parity and a nonempty OOD pool") {
  const auto data = quick_data(64, 64);
  nn::TrainConfig cfg;
  cfg.total_steps = 2;
  cfg.batch_size = 15;  // odd
  EvalPlan plan;
  OatConfig oat;
  oat.mode = OatConfig::Mode::S;
  Rng rng(15, 0);
  CHECK_THROWS_AS(train_oat(mlp_spec(data.train), data.train, data.ood, cfg, oat, plan, rng),
                  std::invalid_argument);
  cfg.batch_size = 16;
  data::Dataset empty;
  empty.channels = data.ood.channels;
  empty.height = data.ood.height;
  empty.width = data.ood.width;
  empty.num_classes = data.ood.num_classes;
  CHECK_THROWS_AS(train_oat(mlp_spec(data.train), data.train, empty, cfg, oat, plan, rng),
                  std::invalid_argument);
}

TEST_CASE("oat-uid with only the target term active reproduces pgd training") {
  const auto data = quick_data();
  nn::TrainConfig uid_cfg;
  uid_cfg.base_lr = 0.05;
  uid_cfg.total_steps = 30;
  uid_cfg.batch_size = 16;
  nn::TrainConfig pgd_cfg = uid_cfg;
  pgd_cfg.batch_size = 8;  // the uid trainer draws batch_size/2 target samples

  EvalPlan plan;
  plan.test = &data.test;
  plan.attacks = {"PGD10"};
  plan.robust_subset = 32;

  UidOatConfig ucfg;
  ucfg.alpha_in = 1.0;
  ucfg.alpha_o = 0.0;
  ucfg.alpha_uid = 0.0;
  ucfg.attack = train_attack();

  data::Dataset uid = data.train;  // ignored: weight is zero

  Rng r1(16, 0), r2(16, 0);
  const auto uid_run = train_oat_uid(mlp_spec(data.train), data.train, data.ood, uid,
                                     uid_cfg, ucfg, plan, r1);
  const auto pgd_run =
      train_pgd_at(mlp_spec(data.train), data.train, pgd_cfg, train_attack(), plan, r2);
  CHECK(uid_run.metrics.to_csv() == pgd_run.metrics.to_csv());
}

TEST_CASE("oat-uid with alpha_uid 0 reproduces an OAT-A step") {
  const auto data = quick_data();
  nn::TrainConfig cfg;
  cfg.base_lr = 0.05;
  cfg.total_steps = 20;
  cfg.batch_size = 16;
  EvalPlan plan;
  plan.test = &data.test;
  plan.attacks = {"PGD10"};
  plan.robust_subset = 32;

  UidOatConfig ucfg;
  ucfg.alpha_in = 0.5;
  ucfg.alpha_o = 0.5;
  ucfg.alpha_uid = 0.0;
  ucfg.attack = train_attack();

  OatConfig oat;
  oat.mode = OatConfig::Mode::A;
  oat.alpha = 1.0;
  oat.attack = train_attack();

  data::Dataset uid = data.train;

  Rng r1(17, 0), r2(17, 0);
  const auto uid_run = train_oat_uid(mlp_spec(data.train), data.train, data.ood, uid, cfg,
                                     ucfg, plan, r1);
  const auto oat_run =
      train_oat(mlp_spec(data.train), data.train, data.ood, cfg, oat, plan, r2);
  CHECK(uid_run.metrics.to_csv() == oat_run.metrics.to_csv());
}

TEST_CASE("oat-uid rejects an empty weighted sub-dataset") {
  const auto data = quick_data(64, 64);
  nn::TrainConfig cfg;
  cfg.total_steps = 2;
  cfg.batch_size = 16;
  EvalPlan plan;
  UidOatConfig ucfg;
  ucfg.attack = train_attack();
  data::Dataset empty;
  empty.channels = data.train.channels;
  empty.height = data.train.height;
  empty.width = data.train.width;
  empty.num_classes = data.train.num_classes;
  Rng rng(18, 0);
  CHECK_THROWS_AS(train_oat_uid(mlp_spec(data.train), data.train, data.ood, empty, cfg,
                                ucfg, plan, rng),
                  std::invalid_argument);
  data::Dataset sentinel_uid = data.ood;  // carries sentinels, not pseudo-labels
  CHECK_THROWS_AS(train_oat_uid(mlp_spec(data.train), data.train, data.ood, sentinel_uid,
                                cfg, ucfg, plan, rng),
                  std::invalid_argument);
}

TEST_CASE("mixup runs with gamma 0 as plain mixup and rejects bad gamma") {
  const auto data = quick_data();
  nn::TrainConfig cfg;
  cfg.base_lr = 0.05;
  cfg.total_steps = 20;
  cfg.batch_size = 16;
  EvalPlan plan;
  plan.test = &data.test;

  MixupOatConfig mc;
  mc.gamma = 0.0;
  data::Dataset no_ood;
  no_ood.channels = data.train.channels;
  no_ood.height = data.train.height;
  no_ood.width = data.train.width;
  no_ood.num_classes = data.train.num_classes;
  Rng rng(19, 0);
  const auto run =
      train_oat_mixup(mlp_spec(data.train), data.train, no_ood, cfg, mc, plan, rng);
  CHECK_FALSE(run.metrics.rows.empty());

  MixupOatConfig bad;
  bad.gamma = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("mixup with gamma 0.5 consumes the OOD pool deterministically") {
  const auto data = quick_data();
  nn::TrainConfig cfg;
  cfg.base_lr = 0.05;
  cfg.total_steps = 20;
  cfg.batch_size = 16;
  EvalPlan plan;
  plan.test = &data.test;
  MixupOatConfig mc;
  mc.gamma = 0.5;
  Rng r1(20, 0), r2(20, 0);
  const auto a = train_oat_mixup(mlp_spec(data.train), data.train, data.ood, cfg, mc, plan, r1);
  const auto b = train_oat_mixup(mlp_spec(data.train), data.train, data.ood, cfg, mc, plan, r2);
  CHECK(a.metrics.to_csv() == b.metrics.to_csv());
}

TEST_CASE("randomization test produces a fixed random-label copy and error curve") {
  const auto data = quick_data();
  nn::TrainConfig cfg;
  cfg.base_lr = 0.05;
  cfg.total_steps = 30;
  cfg.batch_size = 16;
  EvalPlan plan;

  Rng r1(21, 0), r2(21, 0);
  const auto a = randomization_test(mlp_spec(data.train), data.train, data.ood, cfg, false,
                                    plan, r1);
  const auto b = randomization_test(mlp_spec(data.train), data.train, data.ood, cfg, false,
                                    plan, r2);
  CHECK(a.to_csv() == b.to_csv());
  REQUIRE_FALSE(a.rows.empty());
  for (const auto& row : a.rows) {
    CHECK(row.train_err >= 0.0);
    CHECK(row.train_err <= 1.0);
  }

  Rng r3(21, 0);
  const auto with_oat = randomization_test(mlp_spec(data.train), data.train, data.ood, cfg,
                                           true, plan, r3);
  REQUIRE_FALSE(with_oat.rows.empty());
}
