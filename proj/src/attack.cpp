#include "oat/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oat::attack {

void AttackConfig::validate() const {
  if (eps < 0.0) throw std::invalid_argument("AttackConfig: eps must be >= 0");
  if (steps < 1) throw std::invalid_argument("AttackConfig: steps must be >= 1");
  if (step_size <= 0.0) throw std::invalid_argument("AttackConfig: step_size must be > 0");
  if (restarts < 1) throw std::invalid_argument("AttackConfig: restarts must be >= 1");
  if (clip_hi <= clip_lo) throw std::invalid_argument("AttackConfig: empty clip range");
  if (eps > clip_hi - clip_lo) {
    throw std::invalid_argument("AttackConfig: eps exceeds the clip span");
  }
  if (steps == 1 && !random_start && step_size > eps) {
    throw std::invalid_argument("AttackConfig: FGSM (steps=1) requires step_size <= eps");
  }
}

AttackConfig attack_preset(const std::string& name, double eps) {
  AttackConfig cfg;
  cfg.eps = eps;
  cfg.step_size = 2.0 / 255.0;
  cfg.random_start = true;
  std::size_t steps = 0;
  if (name.rfind("PGD", 0) == 0) {
    cfg.loss = nn::LossKind{nn::LossKind::ce_hard, 0.0};
    steps = std::stoul(name.substr(3));
  } else if (name.rfind("CW", 0) == 0) {
    cfg.loss = nn::LossKind{nn::LossKind::cw_margin, 0.0};
    steps = std::stoul(name.substr(2));
  } else {
    throw std::invalid_argument("unknown attack preset: " + name);
  }
  if (steps < 1) throw std::invalid_argument("attack preset needs >= 1 step: " + name);
  cfg.steps = steps;
  return cfg;
}

void AdvBatch::check_invariants(double eps, double clip_lo, double clip_hi) const {
  for (double d : deltas) {
    if (!(std::abs(d) <= eps + 1e-9)) {
      throw std::runtime_error("AdvBatch: L-infinity budget violated");
    }
  }
  for (double v : inputs.x) {
    if (!(v >= clip_lo && v <= clip_hi)) {
      throw std::runtime_error("AdvBatch: pixel outside the clip range");
    }
  }
}

AdvBatch pgd_linf(const nn::Model& model, const nn::Batch& batch, const nn::Targets& targets,
                  const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  if (batch.n <= 0) throw std::invalid_argument("pgd_linf: empty batch");
  const std::size_t n = static_cast<std::size_t>(batch.n);
  const std::size_t dim = static_cast<std::size_t>(batch.input_size());

  AdvBatch out;
  out.inputs = batch;
  out.deltas.assign(batch.x.size(), 0.0);

  if (cfg.eps == 0.0) {
    const auto res = nn::loss_and_grads(model, batch, targets, cfg.loss, {false, false});
    out.best_loss = res.per_sample;
    return out;
  }

  std::vector<double> best_loss(n, -std::numeric_limits<double>::infinity());
  std::vector<double> best_x = batch.x;
  if (cfg.random_start) {
    // The unperturbed input stays a candidate, so the returned per-sample
    // loss never drops below the clean loss.
    const auto res = nn::loss_and_grads(model, batch, targets, cfg.loss, {false, false});
    best_loss = res.per_sample;
  }

  nn::Batch cur;
  cur.n = batch.n;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    cur.x = batch.x;
    if (cfg.random_start) {
      for (std::size_t j = 0; j < cur.x.size(); ++j) {
        cur.x[j] = std::clamp(cur.x[j] + rng.uniform(-cfg.eps, cfg.eps), cfg.clip_lo, cfg.clip_hi);
      }
    }
    for (std::size_t it = 0; it <= cfg.steps; ++it) {
      const bool want_grads = it < cfg.steps;
      const auto res = nn::loss_and_grads(model, cur, targets, cfg.loss, {false, want_grads});
      for (std::size_t i = 0; i < n; ++i) {
        if (res.per_sample[i] > best_loss[i]) {
          best_loss[i] = res.per_sample[i];
          std::copy(cur.x.begin() + i * dim, cur.x.begin() + (i + 1) * dim,
                    best_x.begin() + i * dim);
        }
      }
      if (!want_grads) break;
      for (std::size_t j = 0; j < cur.x.size(); ++j) {
        const double g = res.input_grads[j];
        if (!std::isfinite(g)) throw std::runtime_error("pgd_linf: non-finite input gradient");
        double v = cur.x[j] + cfg.step_size * sign0(g);
        v = std::clamp(v, batch.x[j] - cfg.eps, batch.x[j] + cfg.eps);
        cur.x[j] = std::clamp(v, cfg.clip_lo, cfg.clip_hi);
      }
    }
  }

  out.inputs.x = std::move(best_x);
  out.best_loss = std::move(best_loss);
  for (std::size_t j = 0; j < out.inputs.x.size(); ++j) {
    out.deltas[j] = out.inputs.x[j] - batch.x[j];
  }
  out.check_invariants(cfg.eps, cfg.clip_lo, cfg.clip_hi);
  return out;
}

AdvBatch attack_mixed_batch(const nn::Model& model, const nn::Batch& target_x,
                            const std::vector<int>& target_y, const nn::Batch& ood_x,
                            const ProbVector& t_unif, const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  if (target_x.n <= 0) throw std::invalid_argument("attack_mixed_batch: empty target half");
  if (target_y.size() != static_cast<std::size_t>(target_x.n)) {
    throw std::invalid_argument("attack_mixed_batch: label count mismatch");
  }
  t_unif.validate();

  AdvBatch adv_t = pgd_linf(model, target_x, nn::Targets::from_hard(target_y), cfg, rng);
  if (ood_x.n == 0) return adv_t;

  AttackConfig ood_cfg = cfg;
  ood_cfg.loss = nn::LossKind{nn::LossKind::ce_soft, 0.0};
  std::vector<std::vector<double>> unif(static_cast<std::size_t>(ood_x.n), t_unif.values);
  AdvBatch adv_o = pgd_linf(model, ood_x, nn::Targets::from_soft(std::move(unif)), ood_cfg, rng);

  AdvBatch out;
  out.inputs.n = target_x.n + ood_x.n;
  out.inputs.x = adv_t.inputs.x;
  out.inputs.x.insert(out.inputs.x.end(), adv_o.inputs.x.begin(), adv_o.inputs.x.end());
  out.deltas = adv_t.deltas;
  out.deltas.insert(out.deltas.end(), adv_o.deltas.begin(), adv_o.deltas.end());
  out.best_loss = adv_t.best_loss;
  out.best_loss.insert(out.best_loss.end(), adv_o.best_loss.begin(), adv_o.best_loss.end());
  out.check_invariants(cfg.eps, cfg.clip_lo, cfg.clip_hi);
  return out;
}

}  // namespace oat::attack
