#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oat/math.hpp"
#include "oat/rng.hpp"
#include "oat/synthetic.hpp"

using namespace oat;
using namespace oat::synthetic;

TEST_CASE("sample_tsipras degenerate and moment checks") {
  Rng rng(11, 0);
  TsiprasParams p;
  p.p = 1.0;
  p.eps_mean = 0.0;
  p.d = 1;
  const auto b = sample_tsipras(p, 200, rng);
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(b.row(i)[0] == b.visible_label(i));
  }

  TsiprasParams half = p;
  half.p = 0.5;
  half.d = 1;
  const std::size_t n = 100000;
  const auto bh = sample_tsipras(half, n, rng);
  double corr = 0.0;
  for (std::size_t i = 0; i < n; ++i) corr += bh.row(i)[0] * bh.visible_label(i);
  CHECK(std::abs(corr / n) < 4.0 / std::sqrt(static_cast<double>(n)));

  TsiprasParams m;
  m.p = 0.95;
  m.eps_mean = 0.2;
  m.d = 50;
  const auto bm = sample_tsipras(m, n, rng);
  double x1y = 0.0;
  for (std::size_t i = 0; i < n; ++i) x1y += bm.row(i)[0] * bm.visible_label(i);
  CHECK(x1y / n == doctest::Approx(2.0 * 0.95 - 1.0).epsilon(0.01));
}

TEST_CASE("f_avg_predict ignores the robust coordinate and ties to +1") {
  CHECK(f_avg_predict({100.0, -1.0, -1.0}, 2) == -1);
  CHECK(f_avg_predict({-5.0, 0.3, 0.3, 0.3}, 3) == +1);
  CHECK(f_avg_predict({0.0, 0.0}, 1) == +1);
  CHECK_THROWS_AS(f_avg_predict({1.0, 2.0}, 2), std::invalid_argument);
}

TEST_CASE("f_avg accuracy approaches Phi(eps sqrt(d))") {
  Rng rng(21, 0);
  TsiprasParams p;
  p.p = 0.9;
  p.d = 100;
  p.eps_mean = 2.0 / std::sqrt(100.0);
  const std::size_t n = 100000;
  const auto b = sample_tsipras(p, n, rng);
  std::size_t correct = 0;
  std::vector<double> z(p.d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = b.row(i);
    z.assign(row, row + p.d + 1);
    if (f_avg_predict(z, p.d) == static_cast<int>(b.visible_label(i))) ++correct;
  }
  // Phi(2) ~ 0.977
  CHECK(static_cast<double>(correct) / n > 0.97);
}

TEST_CASE("sample_target_features moments") {
  Rng rng(31, 0);
  FeatureModelParams p;
  p.u = 0.0;
  p.eta = 0.0;
  p.d = 4;
  const auto b = sample_target_features(p, 500, rng);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.row(i)[0] == b.visible_label(i));

  FeatureModelParams q;
  q.u = 0.1;
  q.eta = 1.0;
  q.d = 64;
  const std::size_t n = 100000;
  const auto bq = sample_target_features(q, n, rng);
  double zky = 0.0, z1sq = 0.0, z1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = bq.row(i);
    const double y = bq.visible_label(i);
    zky += row[5] * y;
    z1 += row[0];
    z1sq += row[0] * row[0];
  }
  CHECK(zky / n == doctest::Approx(1.0).epsilon(0.02));
  // var(z1) = u^2 + 1 by total variance over the two mixture components.
  const double mean1 = z1 / n;
  CHECK(z1sq / n - mean1 * mean1 == doctest::Approx(q.u * q.u + 1.0).epsilon(0.03));
}

TEST_CASE("sample_ood_features hides labels and has centered robust coordinate") {
  Rng rng(41, 0);
  FeatureModelParams p;
  p.v = 0.0;
  p.eta = 1.0;
  p.d = 8;
  const auto b = sample_ood_features(p, 1000, rng);
  CHECK(b.labels_hidden);
  CHECK_THROWS_AS(b.visible_label(0), std::logic_error);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.row(i)[0] == 0.0);

  FeatureModelParams q = p;
  q.v = 0.1;
  const std::size_t n = 100000;
  const auto bq = sample_ood_features(q, n, rng);
  double m1 = 0.0, zkq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m1 += bq.row(i)[0];
    zkq += bq.row(i)[3] * bq.oracle_label(i);
  }
  CHECK(std::abs(m1 / n) < 4.0 * q.v / std::sqrt(static_cast<double>(n)));
  CHECK(zkq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("logistic_grad_w zeros and finite differences") {
  LinearClassifier clf;
  clf.w = {0.5, -1.0, 2.0};
  std::vector<double> z{0.0, 0.0, 0.0};
  const auto g0 = logistic_grad_w(z.data(), 3, 0.5, clf);
  for (double g : g0) CHECK(g == 0.0);

  std::vector<double> z1{0.4, -0.3, 1.2};
  const double fixed_t = sigmoid(clf.margin(z1.data(), 3));
  const auto g1 = logistic_grad_w(z1.data(), 3, fixed_t, clf);
  for (double g : g1) CHECK(std::abs(g) < 1e-15);

  // Central differences on random inputs, step 1e-5.
  Rng rng(51, 0);
  for (int trial = 0; trial < 20; ++trial) {
    LinearClassifier c;
    c.w = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    std::vector<double> x{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const double t = rng.next_double();
    const auto g = logistic_grad_w(x.data(), 4, t, c);
    for (std::size_t j = 0; j < 4; ++j) {
      const double h = 1e-5;
      LinearClassifier cp = c, cm = c;
      cp.w[j] += h;
      cm.w[j] -= h;
      const double num =
          (logistic_loss(x.data(), 4, t, cp) - logistic_loss(x.data(), 4, t, cm)) / (2.0 * h);
      CHECK(g[j] == doctest::Approx(num).epsilon(1e-6));
    }
  }
}

TEST_CASE("feature_adversary identity, pointwise invariance and sign structure") {
  Rng rng(61, 0);
  FeatureModelParams p;
  p.d = 16;
  LinearClassifier clf = LinearClassifier::uniform_nonrobust(p.d);
  const auto b = sample_ood_features(p, 200, rng);

  FeatureAttackConfig zero{0.0, 0.5};
  FeatureAttackConfig cfg{0.7, 0.5};
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double* z = b.row(i);
    const auto same = feature_adversary(z, b.dim, zero.t, clf, zero);
    for (std::size_t j = 0; j < b.dim; ++j) CHECK(same[j] == z[j]);

    const auto zbar = feature_adversary(z, b.dim, cfg.t, clf, cfg);
    CHECK(zbar[0] == z[0]);  // w1 = 0, sign(0) = 0
    const double s = sigmoid(clf.margin(z, b.dim));
    if (s > 0.5) {
      for (std::size_t j = 1; j < b.dim; ++j) CHECK(zbar[j] == z[j] + cfg.lambda);
    } else if (s < 0.5) {
      for (std::size_t j = 1; j < b.dim; ++j) CHECK(zbar[j] == z[j] - cfg.lambda);
    }
  }
}

TEST_CASE("adversary never moves a coordinate whose weight is zero") {
  Rng rng(62, 0);
  for (int trial = 0; trial < 50; ++trial) {
    LinearClassifier clf;
    clf.w = {0.0, rng.normal(), 0.0, rng.normal()};
    std::vector<double> z{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    FeatureAttackConfig cfg{std::abs(rng.normal()), rng.next_double()};
    const auto zbar = feature_adversary(z.data(), 4, cfg.t, clf, cfg);
    CHECK(zbar[0] == z[0]);
    CHECK(zbar[2] == z[2]);
  }
}

TEST_CASE("T1: exact robust invariance and lambda-linear feature shift") {
  TheoremSetup setup;
  setup.ood = FeatureModelParams{0.1, 0.1, 1.0, 16};
  setup.attack = FeatureAttackConfig{0.5, 0.5};
  setup.n_samples = 50000;
  Rng rng(71, 0);
  const auto rep = verify_theorem(TheoremId::T1, setup, rng);
  CHECK(rep.pass);
  CHECK(rep.coords[0].estimate == 0.0);

  // lambda = 0 gives exactly zero deltas everywhere.
  TheoremSetup zs = setup;
  zs.attack.lambda = 0.0;
  Rng rng0(71, 0);
  const auto rep0 = verify_theorem(TheoremId::T1, zs, rng0);
  CHECK(rep0.pass);
  for (const auto& c : rep0.coords) CHECK(c.estimate == 0.0);

  // Doubling lambda doubles the k >= 2 delta within MC error.
  TheoremSetup s2 = setup;
  s2.attack.lambda = 1.0;
  Rng rng2(71, 0);
  const auto rep2 = verify_theorem(TheoremId::T1, s2, rng2);
  CHECK(rep2.coords[1].estimate ==
        doctest::Approx(2.0 * rep.coords[1].estimate).epsilon(0.02));
}

TEST_CASE("T2/T3 verify in the saturated regime and flag the unsaturated one") {
  // eta + lambda = 4 keeps |w^T zbar| > 3 essentially always.
  TheoremSetup sat;
  sat.ood = FeatureModelParams{0.1, 0.1, 3.5, 64};
  sat.attack = FeatureAttackConfig{0.5, 0.5};
  sat.n_samples = 100000;
  Rng rng(81, 0);
  const auto t2 = verify_theorem(TheoremId::T2, sat, rng);
  CHECK(t2.regime_ok);
  CHECK(t2.pass);
  CHECK(t2.coords[0].target == 0.0);
  CHECK(t2.coords[1].target == doctest::Approx(0.5 * (3.5 + 0.5)));

  Rng rng3(82, 0);
  const auto t3 = verify_theorem(TheoremId::T3, sat, rng3);
  CHECK(t3.regime_ok);
  CHECK(t3.pass);
  CHECK(t3.coords[0].target == doctest::Approx(0.25));
  CHECK(t3.coords[0].estimate == doctest::Approx(0.25).epsilon(0.05));

  // eta = 1: w^T zbar concentrates near 1.5, far from saturation; the guard
  // must report the regime instead of silently failing tolerances.
  TheoremSetup unsat = sat;
  unsat.ood.eta = 1.0;
  Rng rng4(83, 0);
  const auto bad = verify_theorem(TheoremId::T2, unsat, rng4);
  CHECK_FALSE(bad.regime_ok);
  CHECK_FALSE(bad.pass);
  CHECK(bad.status == "approximation regime not met");
  CHECK(bad.saturation < 0.01);
}

TEST_CASE("T2 w1 estimate sits within 3 SE of zero by symmetry") {
  TheoremSetup sat;
  sat.ood = FeatureModelParams{0.1, 0.1, 3.5, 64};
  sat.attack = FeatureAttackConfig{0.5, 0.5};
  sat.n_samples = 100000;
  Rng rng(84, 0);
  const auto t2 = verify_theorem(TheoremId::T2, sat, rng);
  CHECK(std::abs(t2.coords[0].estimate) <= 3.0 * t2.coords[0].se);
}

TEST_CASE("B4 and B5 verify under the weak-dependence guard") {
  TheoremSetup setup;
  setup.std_model = StdFeatureModelParams{0.1, 1.0, 1.0};
  setup.attack.t = 0.5;
  setup.n_samples = 100000;
  Rng rng(91, 0);
  const auto b4 = verify_theorem(TheoremId::B4, setup, rng);
  CHECK(b4.pass);

  Rng rng2(92, 0);
  const auto b5 = verify_theorem(TheoremId::B5, setup, rng2);
  CHECK(b5.pass);
  CHECK(b5.coords.size() == 2);
  CHECK(b5.coords[0].estimate > 0.0);
  CHECK(b5.coords[1].estimate < 0.0);
}

TEST_CASE("verifier rejects insufficient samples and bad T3 classifiers") {
  TheoremSetup setup;
  setup.n_samples = 100;
  Rng rng(99, 0);
  CHECK_THROWS_AS(verify_theorem(TheoremId::T1, setup, rng), std::invalid_argument);

  TheoremSetup t3;
  t3.n_samples = 10000;
  t3.clf = LinearClassifier::uniform_nonrobust(t3.ood.d);  // w1 = 0
  CHECK_THROWS_AS(verify_theorem(TheoremId::T3, t3, rng), std::invalid_argument);
}

TEST_CASE("report serializes theorem id and per-coordinate rows") {
  TheoremSetup setup;
  setup.ood.d = 4;
  setup.n_samples = 10000;
  Rng rng(101, 0);
  const auto rep = verify_theorem(TheoremId::T1, setup, rng);
  const auto text = rep.to_text();
  CHECK(text.find("theorem T1") != std::string::npos);
  CHECK(text.find("z1") != std::string::npos);
  CHECK(text.find("z5") != std::string::npos);
}

TEST_CASE("expected_losses: identity at lambda 0, ln 2 at eta 0, gap at large lambda") {
  FeatureModelParams p;
  p.eta = 0.0;
  p.d = 64;
  const auto sampler = [&p](std::size_t n, Rng& r) { return sample_target_features(p, n, r); };
  LinearClassifier clf = LinearClassifier::uniform_nonrobust(p.d);

  Rng rng(111, 0);
  const auto zero = expected_losses(clf, sampler, FeatureAttackConfig{0.0, 0.5}, 20000, rng);
  CHECK(zero.beta_a == zero.beta_s);
  CHECK(zero.beta_s == doctest::Approx(std::log(2.0)).epsilon(0.01));

  FeatureModelParams pe;
  pe.eta = 1.0;
  pe.d = 64;
  const auto sampler_e = [&pe](std::size_t n, Rng& r) { return sample_target_features(pe, n, r); };
  Rng rng2(112, 0);
  const auto big = expected_losses(clf, sampler_e, FeatureAttackConfig{5.0, 0.5}, 20000, rng2);
  CHECK(big.beta_a - big.beta_s > 1.0);
  CHECK(big.beta_a >= big.beta_s - 3.0 * (big.se_s + big.se_a));
}
