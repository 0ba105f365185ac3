// L-infinity bounded input-space attacks (FGSM / PGD / CW-loss-in-PGD)
// against hard or soft targets. One implementation serves evaluation and the
// adversarial-training inner maximization.
#pragma once

#include <string>
#include <vector>

#include "oat/math.hpp"
#include "oat/model.hpp"
#include "oat/rng.hpp"

namespace oat::attack {

struct AttackConfig {
  double eps = 8.0 / 255.0;       // L-infinity budget, normalized pixel units
  std::size_t steps = 10;
  double step_size = 2.0 / 255.0;
  bool random_start = true;
  std::size_t restarts = 1;
  nn::LossKind loss;              // default ce-hard
  double clip_lo = 0.0;
  double clip_hi = 1.0;

  void validate() const;
};

// Named evaluation presets: PGD<T> (ce-hard) and CW<T> (cw-margin, kappa 0),
// step size 2/255, random start on.
AttackConfig attack_preset(const std::string& name, double eps = 8.0 / 255.0);

struct AdvBatch {
  nn::Batch inputs;                  // best-loss iterates, clipped
  std::vector<double> deltas;        // inputs - original
  std::vector<double> best_loss;     // per-sample loss at the returned iterate

  // Throws unless every delta is within eps + 1e-9 and every pixel is within
  // the clip range. Called on every attack return; callable from tests.
  void check_invariants(double eps, double clip_lo, double clip_hi) const;
};

// Iterated sign ascent on cfg.loss with per-sample best-iterate tracking:
// the returned iterate never has lower loss than any visited iterate, so with
// random_start off the output loss is >= the input loss.
AdvBatch pgd_linf(const nn::Model& model, const nn::Batch& batch, const nn::Targets& targets,
                  const AttackConfig& cfg, Rng& rng);

// Concatenated attack on a labeled target half and an unlabeled OOD half that
// is pushed away from the uniform distribution label. Both halves share cfg;
// the OOD half always maximizes ce-soft against t_unif.
AdvBatch attack_mixed_batch(const nn::Model& model, const nn::Batch& target_x,
                            const std::vector<int>& target_y, const nn::Batch& ood_x,
                            const ProbVector& t_unif, const AttackConfig& cfg, Rng& rng);

}  // namespace oat::attack
