#include "oat/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace oat::nn {

void TrainConfig::validate() const {
  if (base_lr <= 0.0) throw std::invalid_argument("TrainConfig: base_lr must be > 0");
  if (total_steps < 1) throw std::invalid_argument("TrainConfig: total_steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
  }
  if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step >= cfg.total_steps) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " >= total_steps");
  }
  if (4 * step >= 3 * cfg.total_steps) return cfg.base_lr * 0.01;
  if (2 * step >= cfg.total_steps) return cfg.base_lr * 0.1;
  return cfg.base_lr;
}

void sgd_step(Model& model, const std::vector<double>& grads, double lr,
              const TrainConfig& cfg, SgdState& state) {
  if (grads.size() != model.params.size()) {
    throw std::invalid_argument("sgd_step: gradient size mismatch");
  }
  if (state.velocity.empty()) {
    state.velocity.assign(model.params.size(), 0.0);
  } else if (state.velocity.size() != model.params.size()) {
    throw std::invalid_argument("sgd_step: momentum buffer size mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw std::runtime_error("sgd_step: non-finite gradient at index " + std::to_string(i) +
                               " (value " + std::to_string(grads[i]) + ")");
    }
    const double g = grads[i] + cfg.weight_decay * model.params[i];
    state.velocity[i] = cfg.momentum * state.velocity[i] + g;
    model.params[i] -= lr * state.velocity[i];
    if (!std::isfinite(model.params[i])) {
      throw std::runtime_error("sgd_step: non-finite parameter after update at index " +
                               std::to_string(i));
    }
  }
}

}  // namespace oat::nn
