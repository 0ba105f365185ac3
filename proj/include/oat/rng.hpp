// Deterministic splittable random number generation.
//
// Every stochastic operation in the library takes an explicit Rng. A stream is
// fully identified by (seed, stream_id); the same pair replays the same
// sequence on any platform because only integer arithmetic and IEEE-754
// double operations are used (normals come from Box-Muller, never from the
// platform's std::normal_distribution, whose output is unspecified).
#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace oat {

// Mixing finalizer used for output scrambling and stream derivation.
std::uint64_t mix64(std::uint64_t x);

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();

  // Uniform double in [0, 1).
  double next_double();

  double uniform(double lo, double hi);

  // Integer in [0, n), n >= 1.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller; consumes exactly two 64-bit draws.
  double normal();

  double normal(double mean, double stddev);

  // Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
  double gamma(double shape);

  // Symmetric Beta(a, a) on [0, 1].
  double beta_symmetric(double a);

  // Child stream with state unrelated to the parent's remaining sequence.
  Rng split();

  // Stream deterministically derived from this generator's seed and a list of
  // key words (e.g. {epoch, batch}); does not advance this generator.
  Rng derive(std::initializer_list<std::uint64_t> words) const;

 private:
  Rng() = default;

  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t state_ = 0;
  std::uint64_t gamma_ = 0;
};

// n i.i.d. draws from N(mean, stddev^2). stddev = 0 returns n copies of mean;
// negative stddev is rejected.
std::vector<double> gaussian(Rng& rng, double mean, double stddev, std::size_t n);

}  // namespace oat
