// Gaussian feature models and the Monte Carlo machinery that checks the
// closed-form expectations (T1-T3 for adversarial learning on OOD features,
// B4-B5 for standard learning) against sampled estimates.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "oat/rng.hpp"

namespace oat::synthetic {

// Binary task with one strongly correlated feature and d weakly correlated
// ones: x1 = +/-y with prob p, x_k ~ N(eps_mean * y, 1).
struct TsiprasParams {
  double p = 0.9;         // robust-feature correctness, in [0.5, 1]
  double eps_mean = 0.2;  // mean of the weakly correlated features
  std::size_t d = 50;     // number of weakly correlated features

  void validate() const;
};

// Target / OOD feature distributions. Target: z1 ~ N(y, u^2), z_k ~ N(eta*y, 1).
// OOD: z1 ~ N(0, v^2), z_k ~ N(eta*q, 1) with q the hidden label.
struct FeatureModelParams {
  double u = 0.1;
  double v = 0.1;
  double eta = 1.0;   // correlation strength of the non-robust features
  std::size_t d = 64;

  void validate() const;
};

// Two-feature standard-learning model: z1 ~ N(0, sigma1^2) (desirable,
// absent from OOD), z2 ~ N(kappa*q, sigma2^2) (undesirable, shared).
struct StdFeatureModelParams {
  double sigma1 = 0.1;
  double sigma2 = 1.0;
  double kappa = 1.0;
  double variance_ratio_guard = 10.0;  // requires sigma1 <= sigma2 / guard

  void validate() const;
};

// Rows are samples, each of length d+1 (coordinate 0 is the robust/desirable
// feature). Labels are +/-1: y for target data, q for OOD data. OOD labels are
// hidden; training-facing code must go through visible_label, which refuses
// them. The verifier reads oracle_label explicitly.
struct LabeledFeatureBatch {
  std::vector<double> features;  // row-major, n * dim
  std::vector<double> labels;    // +/-1
  std::size_t dim = 0;
  bool labels_hidden = false;

  std::size_t size() const { return labels.size(); }
  const double* row(std::size_t i) const { return features.data() + i * dim; }
  double* row(std::size_t i) { return features.data() + i * dim; }

  double visible_label(std::size_t i) const;
  double oracle_label(std::size_t i) const { return labels[i]; }
};

struct LinearClassifier {
  std::vector<double> w;

  // w = [0, 1/d, ..., 1/d] over d+1 coordinates.
  static LinearClassifier uniform_nonrobust(std::size_t d);

  double margin(const double* z, std::size_t dim) const;
};

// One-shot feature-space sign adversary configuration.
struct FeatureAttackConfig {
  double lambda = 0.5;  // feature-space budget, >= 0
  double t = 0.5;       // target value in [0, 1]

  void validate() const;
};

LabeledFeatureBatch sample_tsipras(const TsiprasParams& params, std::size_t n, Rng& rng);
LabeledFeatureBatch sample_target_features(const FeatureModelParams& params, std::size_t n, Rng& rng);
LabeledFeatureBatch sample_ood_features(const FeatureModelParams& params, std::size_t n, Rng& rng);
LabeledFeatureBatch sample_std_ood_features(const StdFeatureModelParams& params, std::size_t n, Rng& rng);

// sign of the mean of coordinates 1..d; the strongly correlated coordinate 0
// is ignored. Ties resolve to +1 (a classifier must output a class).
int f_avg_predict(const std::vector<double>& z, std::size_t d);

// Binary logistic model p(y=+1|z) = sigmoid(w^T z) with target value t.
double logistic_loss(const double* z, std::size_t dim, double t, const LinearClassifier& clf);
std::vector<double> logistic_grad_w(const double* z, std::size_t dim, double t, const LinearClassifier& clf);
std::vector<double> logistic_grad_z(const double* z, std::size_t dim, double t, const LinearClassifier& clf);

// zbar_j = z_j + lambda * sign((sigmoid(w^T z) - t) * w_j), with sign(0) = 0.
std::vector<double> feature_adversary(const double* z, std::size_t dim, double t,
                                      const LinearClassifier& clf,
                                      const FeatureAttackConfig& cfg);

enum class TheoremId { T1, T2, T3, B4, B5 };

std::string theorem_name(TheoremId id);
TheoremId theorem_from_name(const std::string& name);

struct CoordinateCheck {
  std::string name;
  double estimate = 0.0;
  double target = 0.0;
  double se = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VerificationReport {
  std::string theorem;
  std::vector<CoordinateCheck> coords;
  double saturation = 1.0;  // P(|w^T zbar| > saturation_z), T2/T3 only
  bool regime_ok = true;
  std::string status = "ok";  // "ok" | "approximation regime not met" | ...
  bool pass = false;

  std::string to_text() const;
};

struct VerifyOptions {
  double saturation_z = 3.0;       // sigmoid is within ~5% of saturation beyond this
  double min_saturation = 0.99;
  double rel_tol = 0.05;           // closed-form tolerance for T2/T3
  double t1_rel_tol = 0.02;
  double se_multiplier = 3.0;
  double weak_dependence_max_ratio = 0.01;  // B4/B5: E|w1 z1| / E|w2 z2|
};

struct TheoremSetup {
  FeatureModelParams ood;            // T1-T3
  StdFeatureModelParams std_model;   // B4-B5
  LinearClassifier clf;              // empty w -> per-theorem default
  FeatureAttackConfig attack;        // lambda, t
  std::size_t n_samples = 100000;
  VerifyOptions options;
};

VerificationReport verify_theorem(TheoremId id, const TheoremSetup& setup, Rng& rng);

// Monte Carlo estimates of the expected standard and adversarial losses over
// the sampler's distribution, on the same sample set.
using BatchSampler = std::function<LabeledFeatureBatch(std::size_t, Rng&)>;

struct ExpectedLosses {
  double beta_s = 0.0;
  double beta_a = 0.0;
  double se_s = 0.0;
  double se_a = 0.0;
};

ExpectedLosses expected_losses(const LinearClassifier& clf, const BatchSampler& sampler,
                               const FeatureAttackConfig& cfg, std::size_t n_samples,
                               Rng& rng);

}  // namespace oat::synthetic
