#include "oat/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "oat/math.hpp"

namespace oat::synthetic {

namespace {

// Streaming mean / standard-error accumulator with fixed summation order.
struct MeanAcc {
  double sum = 0.0;
  double sumsq = 0.0;
  std::size_t n = 0;

  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double se() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = (sumsq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
    return std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  }
};

double pm1(Rng& rng) { return (rng.next_u64() & 1ull) ? 1.0 : -1.0; }

}  // namespace

void TsiprasParams::validate() const {
  if (!(p >= 0.5 && p <= 1.0)) throw std::invalid_argument("TsiprasParams: p must be in [0.5, 1]");
  if (eps_mean < 0.0) throw std::invalid_argument("TsiprasParams: eps_mean must be >= 0");
  if (d < 1) throw std::invalid_argument("TsiprasParams: d must be >= 1");
}

void FeatureModelParams::validate() const {
  if (u < 0.0 || v < 0.0 || eta < 0.0) {
    throw std::invalid_argument("FeatureModelParams: u, v, eta must be >= 0");
  }
  if (d < 1) throw std::invalid_argument("FeatureModelParams: d must be >= 1");
}

void StdFeatureModelParams::validate() const {
  if (sigma1 < 0.0 || sigma2 < 0.0 || kappa < 0.0) {
    throw std::invalid_argument("StdFeatureModelParams: parameters must be >= 0");
  }
  if (sigma1 > sigma2 / variance_ratio_guard) {
    throw std::invalid_argument("StdFeatureModelParams: requires sigma1 <= sigma2 / guard");
  }
}

void FeatureAttackConfig::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("FeatureAttackConfig: lambda must be >= 0");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("FeatureAttackConfig: t must be in [0, 1]");
}

double LabeledFeatureBatch::visible_label(std::size_t i) const {
  if (labels_hidden) {
    throw std::logic_error("LabeledFeatureBatch: labels are hidden (OOD data)");
  }
  return labels[i];
}

LinearClassifier LinearClassifier::uniform_nonrobust(std::size_t d) {
  LinearClassifier clf;
  clf.w.assign(d + 1, 1.0 / static_cast<double>(d));
  clf.w[0] = 0.0;
  return clf;
}

double LinearClassifier::margin(const double* z, std::size_t dim) const {
  if (w.size() != dim) throw std::invalid_argument("LinearClassifier: dimension mismatch");
  double m = 0.0;
  for (std::size_t j = 0; j < dim; ++j) m += w[j] * z[j];
  return m;
}

LabeledFeatureBatch sample_tsipras(const TsiprasParams& params, std::size_t n, Rng& rng) {
  params.validate();
  if (n < 1) throw std::invalid_argument("sample_tsipras: n must be >= 1");
  LabeledFeatureBatch b;
  b.dim = params.d + 1;
  b.features.resize(n * b.dim);
  b.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = pm1(rng);
    b.labels[i] = y;
    double* z = b.row(i);
    z[0] = (rng.next_double() < params.p) ? y : -y;
    for (std::size_t k = 1; k < b.dim; ++k) {
      z[k] = rng.normal(params.eps_mean * y, 1.0);
    }
  }
  return b;
}

LabeledFeatureBatch sample_target_features(const FeatureModelParams& params, std::size_t n, Rng& rng) {
  params.validate();
  LabeledFeatureBatch b;
  b.dim = params.d + 1;
  b.features.resize(n * b.dim);
  b.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = pm1(rng);
    b.labels[i] = y;
    double* z = b.row(i);
    z[0] = rng.normal(y, params.u);
    for (std::size_t k = 1; k < b.dim; ++k) {
      z[k] = rng.normal(params.eta * y, 1.0);
    }
  }
  return b;
}

LabeledFeatureBatch sample_ood_features(const FeatureModelParams& params, std::size_t n, Rng& rng) {
  params.validate();
  LabeledFeatureBatch b;
  b.dim = params.d + 1;
  b.features.resize(n * b.dim);
  b.labels.resize(n);
  b.labels_hidden = true;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = pm1(rng);
    b.labels[i] = q;
    double* z = b.row(i);
    z[0] = rng.normal(0.0, params.v);
    for (std::size_t k = 1; k < b.dim; ++k) {
      z[k] = rng.normal(params.eta * q, 1.0);
    }
  }
  return b;
}

LabeledFeatureBatch sample_std_ood_features(const StdFeatureModelParams& params, std::size_t n, Rng& rng) {
  params.validate();
  LabeledFeatureBatch b;
  b.dim = 2;
  b.features.resize(n * 2);
  b.labels.resize(n);
  b.labels_hidden = true;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = pm1(rng);
    b.labels[i] = q;
    double* z = b.row(i);
    z[0] = rng.normal(0.0, params.sigma1);
    z[1] = rng.normal(params.kappa * q, params.sigma2);
  }
  return b;
}

int f_avg_predict(const std::vector<double>& z, std::size_t d) {
  if (z.size() != d + 1) throw std::invalid_argument("f_avg_predict: length must be d+1");
  double s = 0.0;
  for (std::size_t k = 1; k <= d; ++k) s += z[k];
  return s >= 0.0 ? +1 : -1;
}

double logistic_loss(const double* z, std::size_t dim, double t, const LinearClassifier& clf) {
  const double m = clf.margin(z, dim);
  // -t log sigma(m) - (1-t) log(1 - sigma(m))
  return t * softplus(-m) + (1.0 - t) * softplus(m);
}

std::vector<double> logistic_grad_w(const double* z, std::size_t dim, double t,
                                    const LinearClassifier& clf) {
  const double r = sigmoid(clf.margin(z, dim)) - t;
  std::vector<double> g(dim);
  for (std::size_t j = 0; j < dim; ++j) g[j] = r * z[j];
  return g;
}

std::vector<double> logistic_grad_z(const double* z, std::size_t dim, double t,
                                    const LinearClassifier& clf) {
  const double r = sigmoid(clf.margin(z, dim)) - t;
  std::vector<double> g(dim);
  for (std::size_t j = 0; j < dim; ++j) g[j] = r * clf.w[j];
  return g;
}

std::vector<double> feature_adversary(const double* z, std::size_t dim, double t,
                                      const LinearClassifier& clf,
                                      const FeatureAttackConfig& cfg) {
  cfg.validate();
  const double r = sigmoid(clf.margin(z, dim)) - t;
  std::vector<double> zbar(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    zbar[j] = z[j] + cfg.lambda * sign0(r * clf.w[j]);
  }
  return zbar;
}

std::string theorem_name(TheoremId id) {
  switch (id) {
    case TheoremId::T1: return "T1";
    case TheoremId::T2: return "T2";
    case TheoremId::T3: return "T3";
    case TheoremId::B4: return "B4";
    case TheoremId::B5: return "B5";
  }
  return "?";
}

TheoremId theorem_from_name(const std::string& name) {
  if (name == "T1" || name == "t1") return TheoremId::T1;
  if (name == "T2" || name == "t2") return TheoremId::T2;
  if (name == "T3" || name == "t3") return TheoremId::T3;
  if (name == "B4" || name == "b4") return TheoremId::B4;
  if (name == "B5" || name == "b5") return TheoremId::B5;
  throw std::invalid_argument("unknown theorem id: " + name);
}

std::string VerificationReport::to_text() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "theorem %s status=%s pass=%d saturation=%.6f\n",
                theorem.c_str(), status.c_str(), pass ? 1 : 0, saturation);
  out += line;
  out += "coord estimate target se tolerance pass\n";
  for (const auto& c : coords) {
    std::snprintf(line, sizeof(line), "%s %.10g %.10g %.3g %.3g %d\n", c.name.c_str(),
                  c.estimate, c.target, c.se, c.tolerance, c.pass ? 1 : 0);
    out += line;
  }
  return out;
}

namespace {

CoordinateCheck make_check(const std::string& name, const MeanAcc& acc, double target,
                           double tolerance) {
  CoordinateCheck c;
  c.name = name;
  c.estimate = acc.mean();
  c.target = target;
  c.se = acc.se();
  c.tolerance = tolerance;
  c.pass = std::abs(c.estimate - target) <= tolerance;
  return c;
}

VerificationReport verify_t1(const TheoremSetup& setup, Rng& rng) {
  const auto& fm = setup.ood;
  const auto& opt = setup.options;
  LinearClassifier clf = setup.clf.w.empty()
                             ? LinearClassifier::uniform_nonrobust(fm.d)
                             : setup.clf;
  const auto batch = sample_ood_features(fm, setup.n_samples, rng);

  MeanAcc robust_delta;
  std::vector<MeanAcc> k_delta(fm.d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double q = batch.oracle_label(i);
    const double* z = batch.row(i);
    const auto zbar = feature_adversary(z, batch.dim, setup.attack.t, clf, setup.attack);
    robust_delta.add(zbar[0] - z[0]);
    for (std::size_t k = 1; k < batch.dim; ++k) {
      // E[zbar_k - z_k | q] = lambda * q, so q * delta estimates lambda.
      k_delta[k - 1].add(q * (zbar[k] - z[k]));
    }
  }

  VerificationReport rep;
  rep.theorem = "T1";
  rep.coords.push_back(make_check("z1", robust_delta, 0.0, 1e-12));
  const double lam = setup.attack.lambda;
  for (std::size_t k = 0; k < fm.d; ++k) {
    const double tol = std::max(opt.t1_rel_tol * lam, opt.se_multiplier * k_delta[k].se());
    rep.coords.push_back(make_check("z" + std::to_string(k + 2), k_delta[k], lam, tol));
  }
  rep.pass = true;
  for (const auto& c : rep.coords) rep.pass = rep.pass && c.pass;
  rep.status = rep.pass ? "ok" : "tolerance exceeded";
  return rep;
}

VerificationReport verify_t2_t3(TheoremId id, const TheoremSetup& setup, Rng& rng) {
  const auto& fm = setup.ood;
  const auto& opt = setup.options;
  LinearClassifier clf = setup.clf;
  if (clf.w.empty()) {
    clf = LinearClassifier::uniform_nonrobust(fm.d);
    if (id == TheoremId::T3) clf.w[0] = 1.0 / static_cast<double>(fm.d);
  }
  if (id == TheoremId::T3 && !(clf.w[0] > 0.0)) {
    throw std::invalid_argument("verify_theorem(T3): requires w1 > 0");
  }
  const auto batch = sample_ood_features(fm, setup.n_samples, rng);

  MeanAcc g1;
  std::vector<MeanAcc> gk(fm.d);
  std::size_t saturated = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double* z = batch.row(i);
    const auto zbar = feature_adversary(z, batch.dim, setup.attack.t, clf, setup.attack);
    const double margin = clf.margin(zbar.data(), batch.dim);
    if (std::abs(margin) > opt.saturation_z) ++saturated;
    const double r = sigmoid(margin) - setup.attack.t;
    g1.add(r * zbar[0]);
    for (std::size_t k = 1; k < batch.dim; ++k) gk[k - 1].add(r * zbar[k]);
  }

  VerificationReport rep;
  rep.theorem = theorem_name(id);
  rep.saturation = static_cast<double>(saturated) / static_cast<double>(batch.size());
  rep.regime_ok = rep.saturation >= opt.min_saturation;

  const double lam = setup.attack.lambda;
  if (id == TheoremId::T2) {
    rep.coords.push_back(make_check("w1", g1, 0.0, opt.se_multiplier * g1.se()));
  } else {
    rep.coords.push_back(make_check("w1", g1, 0.5 * lam, opt.rel_tol * 0.5 * lam));
  }
  const double target_k = 0.5 * (fm.eta + lam);
  for (std::size_t k = 0; k < fm.d; ++k) {
    rep.coords.push_back(
        make_check("w" + std::to_string(k + 2), gk[k], target_k, opt.rel_tol * target_k));
  }

  bool coords_pass = true;
  for (const auto& c : rep.coords) coords_pass = coords_pass && c.pass;
  if (!rep.regime_ok) {
    rep.status = "approximation regime not met";
    rep.pass = false;
  } else {
    rep.status = coords_pass ? "ok" : "tolerance exceeded";
    rep.pass = coords_pass;
  }
  return rep;
}

VerificationReport verify_b4_b5(TheoremId id, const TheoremSetup& setup, Rng& rng) {
  const auto& sm = setup.std_model;
  const auto& opt = setup.options;
  LinearClassifier clf = setup.clf;
  if (clf.w.empty()) clf.w = {0.01, 1.0};
  if (clf.w.size() != 2) {
    throw std::invalid_argument("verify_theorem(B4/B5): classifier must have 2 weights");
  }

  VerificationReport rep;
  rep.theorem = theorem_name(id);

  const auto run = [&](const LinearClassifier& c, MeanAcc& grad1, MeanAcc& grad2,
                       MeanAcc& contrib1, MeanAcc& contrib2) {
    const auto batch = sample_std_ood_features(sm, setup.n_samples, rng);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double* z = batch.row(i);
      const double r = sigmoid(c.margin(z, 2)) - setup.attack.t;
      grad1.add(r * z[0]);
      grad2.add(r * z[1]);
      contrib1.add(std::abs(c.w[0] * z[0]));
      contrib2.add(std::abs(c.w[1] * z[1]));
    }
  };

  // Weak-dependence regime: |w1 z1| must contribute negligibly to the margin.
  bool weak_ok = true;
  const auto check_weak = [&](const MeanAcc& c1, const MeanAcc& c2) {
    if (c2.mean() <= 0.0 || c1.mean() / c2.mean() > opt.weak_dependence_max_ratio) {
      weak_ok = false;
    }
  };

  if (id == TheoremId::B4) {
    MeanAcc g1, g2, c1, c2;
    run(clf, g1, g2, c1, c2);
    check_weak(c1, c2);
    rep.coords.push_back(make_check("w1", g1, 0.0, opt.se_multiplier * g1.se()));
  } else {
    // B5 is a sign test: the w2-gradient must match sign(w2) at se_multiplier
    // confidence, for both signs of w2.
    for (int sgn : {+1, -1}) {
      LinearClassifier c = clf;
      c.w[1] = sgn * std::abs(c.w[1]);
      MeanAcc g1, g2, c1, c2;
      run(c, g1, g2, c1, c2);
      check_weak(c1, c2);
      CoordinateCheck chk;
      chk.name = sgn > 0 ? "w2(+)" : "w2(-)";
      chk.estimate = g2.mean();
      chk.target = 0.0;
      chk.se = g2.se();
      chk.tolerance = opt.se_multiplier * g2.se();
      chk.pass = (sgn > 0) ? (chk.estimate > chk.tolerance) : (chk.estimate < -chk.tolerance);
      rep.coords.push_back(chk);
    }
  }

  bool coords_pass = true;
  for (const auto& c : rep.coords) coords_pass = coords_pass && c.pass;
  if (!weak_ok) {
    rep.regime_ok = false;
    rep.status = "approximation regime not met";
    rep.pass = false;
  } else {
    rep.status = coords_pass ? "ok" : "tolerance exceeded";
    rep.pass = coords_pass;
  }
  return rep;
}

}  // namespace

VerificationReport verify_theorem(TheoremId id, const TheoremSetup& setup, Rng& rng) {
  if (setup.n_samples < 10000) {
    throw std::invalid_argument("verify_theorem: insufficient samples (need >= 10^4)");
  }
  setup.attack.validate();
  switch (id) {
    case TheoremId::T1: return verify_t1(setup, rng);
    case TheoremId::T2:
    case TheoremId::T3: return verify_t2_t3(id, setup, rng);
    case TheoremId::B4:
    case TheoremId::B5: return verify_b4_b5(id, setup, rng);
  }
  throw std::logic_error("verify_theorem: unreachable");
}

ExpectedLosses expected_losses(const LinearClassifier& clf, const BatchSampler& sampler,
                               const FeatureAttackConfig& cfg, std::size_t n_samples,
                               Rng& rng) {
  if (n_samples < 1) throw std::invalid_argument("expected_losses: n_samples must be >= 1");
  cfg.validate();
  const auto batch = sampler(n_samples, rng);
  MeanAcc std_loss, adv_loss;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double* z = batch.row(i);
    const double y = batch.oracle_label(i);
    const double t = (1.0 + y) / 2.0;  // hard label as target value
    std_loss.add(logistic_loss(z, batch.dim, t, clf));
    FeatureAttackConfig acfg = cfg;
    acfg.t = t;
    const auto zbar = feature_adversary(z, batch.dim, t, clf, acfg);
    adv_loss.add(logistic_loss(zbar.data(), batch.dim, t, clf));
  }
  ExpectedLosses out;
  out.beta_s = std_loss.mean();
  out.beta_a = adv_loss.mean();
  out.se_s = std_loss.se();
  out.se_a = adv_loss.se();
  return out;
}

}  // namespace oat::synthetic
