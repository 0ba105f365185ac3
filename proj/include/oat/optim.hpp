// SGD with momentum and weight decay, plus the piecewise learning-rate
// schedule (x0.1 at 50% and 75% of the total steps).
#pragma once

#include <cstdint>
#include <vector>

#include "oat/model.hpp"

namespace oat::nn {

struct TrainConfig {
  double base_lr = 0.1;
  std::size_t total_steps = 1000;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

double lr_at(std::size_t step, const TrainConfig& cfg);

struct SgdState {
  std::vector<double> velocity;  // zero-initialized momentum buffer
};

// theta <- theta - lr * v, where v <- momentum * v + (grads + wd * theta).
// Throws on non-finite gradients or parameters.
void sgd_step(Model& model, const std::vector<double>& grads, double lr,
              const TrainConfig& cfg, SgdState& state);

}  // namespace oat::nn
