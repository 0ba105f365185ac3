#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oat/attack.hpp"
#include "oat/math.hpp"
#include "oat/model.hpp"
#include "oat/rng.hpp"

using namespace oat;
using namespace oat::nn;
using namespace oat::attack;

namespace {

Model small_model(ModelKind kind, int input_w, int c, Rng& rng, std::vector<int> hidden = {}) {
  ModelSpec spec;
  spec.kind = kind;
  spec.channels = 1;
  spec.height = 1;
  spec.width = input_w;
  spec.hidden = std::move(hidden);
  spec.num_classes = c;
  return build_model(spec, rng);
}

Batch random_pixel_batch(int n, int dim, Rng& rng) {
  Batch b;
  b.n = n;
  b.x.resize(static_cast<std::size_t>(n) * dim);
  for (auto& v : b.x) v = rng.next_double();
  return b;
}

}  // namespace

TEST_CASE("eps = 0 returns the input unchanged with zero deltas") {
  Rng rng(1, 0);
  Model m = small_model(ModelKind::mlp, 6, 3, rng, {5});
  Batch b = random_pixel_batch(4, 6, rng);
  AttackConfig cfg;
  cfg.eps = 0.0;
  cfg.steps = 5;
  Rng arng(2, 0);
  const auto adv = pgd_linf(m, b, Targets::from_hard({0, 1, 2, 0}), cfg, arng);
  CHECK(adv.inputs.x == b.x);
  for (double d : adv.deltas) CHECK(d == 0.0);
}

TEST_CASE("FGSM on a logistic model equals the closed-form sign step") {
  Rng rng(3, 0);
  Model m = small_model(ModelKind::logistic, 8, 2, rng);
  Batch b = random_pixel_batch(6, 8, rng);
  const auto targets = Targets::from_hard({0, 1, 0, 1, 0, 1});

  AttackConfig cfg;
  cfg.eps = 0.05;
  cfg.steps = 1;
  cfg.step_size = 0.05;
  cfg.random_start = false;
  Rng arng(4, 0);
  const auto adv = pgd_linf(m, b, targets, cfg, arng);

  const auto res = loss_and_grads(m, b, targets, cfg.loss, {false, true});
  for (std::size_t j = 0; j < b.x.size(); ++j) {
    const double expect = std::clamp(b.x[j] + cfg.eps * sign0(res.input_grads[j]), 0.0, 1.0);
    CHECK(adv.inputs.x[j] == doctest::Approx(expect).epsilon(1e-12));
  }
  // The one-shot step on a convex-in-input model never lowers the loss.
  const auto after = loss_and_grads(m, adv.inputs, targets, cfg.loss, {false, false});
  const auto before = loss_and_grads(m, b, targets, cfg.loss, {false, false});
  CHECK(after.loss >= before.loss);
}

TEST_CASE("FGSM config validation rejects step_size above eps") {
  AttackConfig cfg;
  cfg.eps = 0.01;
  cfg.steps = 1;
  cfg.step_size = 0.02;
  cfg.random_start = false;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.random_start = true;
  CHECK_NOTHROW(cfg.validate());
  cfg.eps = 2.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // eps beyond clip span
}

TEST_CASE("randomized attacks satisfy the budget, clip and monotone invariants") {
  Rng rng(5, 0);
  for (int trial = 0; trial < 60; ++trial) {
    const int dim = 4 + static_cast<int>(rng.uniform_index(5));
    const int c = 2 + static_cast<int>(rng.uniform_index(3));
    Model m = rng.next_double() < 0.5 ? small_model(ModelKind::logistic, dim, c, rng)
                                      : small_model(ModelKind::mlp, dim, c, rng, {6});
    const int n = 1 + static_cast<int>(rng.uniform_index(4));
    Batch b = random_pixel_batch(n, dim, rng);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.uniform_index(c));

    AttackConfig cfg;
    cfg.eps = rng.uniform(0.01, 0.2);
    cfg.steps = 1 + rng.uniform_index(5);
    cfg.step_size = rng.uniform(0.005, 0.1);
    cfg.random_start = rng.next_double() < 0.5;
    cfg.loss = rng.next_double() < 0.5 ? LossKind{LossKind::ce_hard, 0.0}
                                       : LossKind{LossKind::cw_margin, 0.0};
    if (cfg.steps == 1 && !cfg.random_start) cfg.step_size = std::min(cfg.step_size, cfg.eps);

    Rng arng(100 + trial, 0);
    const auto targets = Targets::from_hard(y);
    const auto adv = pgd_linf(m, b, targets, cfg, arng);
    CHECK_NOTHROW(adv.check_invariants(cfg.eps, cfg.clip_lo, cfg.clip_hi));

    // Returned per-sample loss never drops below the clean per-sample loss.
    const auto clean = loss_and_grads(m, b, targets, cfg.loss, {false, false});
    for (int i = 0; i < n; ++i) {
      CHECK(adv.best_loss[i] >= clean.per_sample[i] - 1e-12);
    }
  }
}

TEST_CASE("attack results are bitwise reproducible for identical inputs") {
  Rng rng(6, 0);
  Model m = small_model(ModelKind::mlp, 10, 4, rng, {8});
  Batch b = random_pixel_batch(5, 10, rng);
  const auto targets = Targets::from_hard({0, 1, 2, 3, 0});
  AttackConfig cfg;
  cfg.eps = 0.1;
  cfg.steps = 7;
  cfg.step_size = 0.02;
  cfg.random_start = true;
  Rng a1(77, 5), a2(77, 5);
  const auto r1 = pgd_linf(m, b, targets, cfg, a1);
  const auto r2 = pgd_linf(m, b, targets, cfg, a2);
  CHECK(r1.inputs.x == r2.inputs.x);
  CHECK(r1.deltas == r2.deltas);
  CHECK(r1.best_loss == r2.best_loss);
}

TEST_CASE("attack_mixed_batch degenerates to pgd_linf without an OOD half") {
  Rng rng(7, 0);
  Model m = small_model(ModelKind::mlp, 6, 3, rng, {5});
  Batch bt = random_pixel_batch(4, 6, rng);
  const std::vector<int> y{0, 1, 2, 0};
  AttackConfig cfg;
  cfg.eps = 0.05;
  cfg.steps = 3;
  cfg.step_size = 0.02;
  cfg.random_start = true;

  Batch empty;
  empty.n = 0;
  Rng a1(9, 1), a2(9, 1);
  const auto mixed = attack_mixed_batch(m, bt, y, empty, ProbVector::uniform(3), cfg, a1);
  const auto plain = pgd_linf(m, bt, Targets::from_hard(y), cfg, a2);
  CHECK(mixed.inputs.x == plain.inputs.x);

  // eps = 0 leaves the concatenation unchanged.
  Batch bo = random_pixel_batch(4, 6, rng);
  AttackConfig zero = cfg;
  zero.eps = 0.0;
  Rng a3(9, 2);
  const auto unchanged = attack_mixed_batch(m, bt, y, bo, ProbVector::uniform(3), zero, a3);
  CHECK(unchanged.inputs.n == 8);
  std::vector<double> cat = bt.x;
  cat.insert(cat.end(), bo.x.begin(), bo.x.end());
  CHECK(unchanged.inputs.x == cat);
}

TEST_CASE("the OOD half moves away from the uniform label in ce-soft loss") {
  Rng rng(8, 0);
  Model m = small_model(ModelKind::mlp, 8, 4, rng, {6});
  Batch bt = random_pixel_batch(3, 8, rng);
  Batch bo = random_pixel_batch(3, 8, rng);
  const std::vector<int> y{0, 1, 2};
  AttackConfig cfg;
  cfg.eps = 0.08;
  cfg.steps = 5;
  cfg.step_size = 0.02;
  cfg.random_start = true;

  const auto unif = ProbVector::uniform(4);
  Rng arng(10, 0);
  const auto adv = attack_mixed_batch(m, bt, y, bo, unif, cfg, arng);

  Batch ood_half;
  ood_half.n = 3;
  ood_half.x.assign(adv.inputs.x.begin() + 3 * 8, adv.inputs.x.end());
  const auto soft = Targets::from_soft({unif.values, unif.values, unif.values});
  const auto post = loss_and_grads(m, ood_half, soft, LossKind{LossKind::ce_soft, 0.0},
                                   {false, false});
  const auto pre = loss_and_grads(m, bo, soft, LossKind{LossKind::ce_soft, 0.0}, {false, false});
  for (int i = 0; i < 3; ++i) CHECK(post.per_sample[i] >= pre.per_sample[i] - 1e-12);
}

TEST_CASE("attack presets carry the declared defaults") {
  const auto pgd20 = attack_preset("PGD20");
  CHECK(pgd20.steps == 20);
  CHECK(pgd20.loss.tag == LossKind::ce_hard);
  CHECK(pgd20.step_size == doctest::Approx(2.0 / 255.0));
  CHECK(pgd20.random_start);
  const auto cw100 = attack_preset("CW100", 0.031);
  CHECK(cw100.steps == 100);
  CHECK(cw100.loss.tag == LossKind::cw_margin);
  CHECK(cw100.eps == doctest::Approx(0.031));
  CHECK_THROWS_AS(attack_preset("AA"), std::invalid_argument);
}
