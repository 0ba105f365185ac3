#include "oat/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oat {

namespace {

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

// Gammas must be odd; weak bit patterns are stirred once more (the
// SplittableRandom recipe).
std::uint64_t mix_gamma(std::uint64_t x) {
  x = mix64(x) | 1ull;
  if (std::popcount(x ^ (x >> 1)) < 24) {
    x ^= 0xAAAAAAAAAAAAAAAAull;
  }
  return x;
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x += kGoldenGamma;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      state_(mix64(seed ^ mix64(stream_id))),
      gamma_(mix_gamma(mix64(stream_id) + seed)) {}

std::uint64_t Rng::next_u64() {
  state_ += gamma_;
  return mix64(state_);
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be >= 1");
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

double Rng::normal() {
  // (x >> 11) + 0.5 keeps u1 strictly inside (0, 1), so log(u1) is finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

double Rng::gamma(double shape) {
  if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be > 0");
  if (shape < 1.0) {
    // Boost to shape+1, then scale back (Marsaglia-Tsang section 6).
    const double u = next_double();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = next_double();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return d * v;
    }
  }
}

double Rng::beta_symmetric(double a) {
  if (a <= 0.0) throw std::invalid_argument("beta_symmetric: a must be > 0");
  const double g1 = gamma(a);
  const double g2 = gamma(a);
  if (g1 + g2 == 0.0) return 0.5;
  return g1 / (g1 + g2);
}

Rng Rng::split() {
  Rng child;
  child.seed_ = seed_;
  child.stream_id_ = next_u64();
  child.state_ = mix64(next_u64());
  child.gamma_ = mix_gamma(child.stream_id_);
  return child;
}

Rng Rng::derive(std::initializer_list<std::uint64_t> words) const {
  std::uint64_t key = mix64(stream_id_);
  for (std::uint64_t w : words) {
    key = mix64(key ^ mix64(w + kGoldenGamma));
  }
  return Rng(seed_, key);
}

std::vector<double> gaussian(Rng& rng, double mean, double stddev, std::size_t n) {
  if (stddev < 0.0) throw std::invalid_argument("gaussian: stddev must be >= 0");
  std::vector<double> out(n);
  if (stddev == 0.0) {
    for (auto& v : out) v = mean;
    return out;
  }
  for (auto& v : out) v = mean + stddev * rng.normal();
  return out;
}

}  // namespace oat
