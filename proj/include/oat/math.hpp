// Numerically stable scalar and vector primitives shared across the library.
#pragma once

#include <span>
#include <vector>

namespace oat {

// sign(0) = 0. The feature-space adversary depends on this convention; the
// +1 tie rule used for classification lives in the predictors, not here.
inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// log(1 + e^x) without overflow.
double softplus(double x);

// 1 / (1 + e^-x); saturates instead of overflowing.
double sigmoid(double x);

// log(sigmoid(x)), stable for large |x|.
double log_sigmoid(double x);

// A discrete probability distribution: entries in [0, 1] summing to 1
// within 1e-9. validate() throws std::invalid_argument on violation.
struct ProbVector {
  std::vector<double> values;

  static ProbVector uniform(std::size_t c);

  void validate() const;
  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

// Shift-invariant softmax; output satisfies the ProbVector invariants.
std::vector<double> softmax_stable(std::span<const double> logits);

// log softmax via log-sum-exp.
std::vector<double> log_softmax_stable(std::span<const double> logits);

// -sum_i target_i * log softmax(logits)_i. Lengths must agree (c >= 2).
double cross_entropy_soft(std::span<const double> logits,
                          std::span<const double> target);

}  // namespace oat
