#include "oat/math.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oat {

double softplus(double x) {
  // max(x, 0) + log1p(e^-|x|) never overflows.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) { return -softplus(-x); }

ProbVector ProbVector::uniform(std::size_t c) {
  if (c < 2) throw std::invalid_argument("ProbVector::uniform: need c >= 2");
  ProbVector p;
  p.values.assign(c, 1.0 / static_cast<double>(c));
  return p;
}

void ProbVector::validate() const {
  double sum = 0.0;
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("ProbVector: entry outside [0, 1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("ProbVector: entries do not sum to 1");
  }
}

std::vector<double> softmax_stable(std::span<const double> logits) {
  const auto ls = log_softmax_stable(logits);
  std::vector<double> out(ls.size());
  for (std::size_t i = 0; i < ls.size(); ++i) out[i] = std::exp(ls[i]);
  return out;
}

std::vector<double> log_softmax_stable(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("log_softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

double cross_entropy_soft(std::span<const double> logits,
                          std::span<const double> target) {
  if (logits.size() != target.size()) {
    throw std::invalid_argument("cross_entropy_soft: length mismatch");
  }
  if (logits.size() < 2) {
    throw std::invalid_argument("cross_entropy_soft: need c >= 2");
  }
  const auto ls = log_softmax_stable(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < ls.size(); ++i) loss -= target[i] * ls[i];
  return loss;
}

}  // namespace oat
