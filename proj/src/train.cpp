#include "oat/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace oat::train {

namespace {

// Stream tags; every consumer of randomness gets its own derived stream so
// that disabling one component never shifts another's sequence.
constexpr std::uint64_t kInitStream = 0x11;
constexpr std::uint64_t kTargetStream = 0x22;
constexpr std::uint64_t kOodStream = 0x33;
constexpr std::uint64_t kUidStream = 0x44;
constexpr std::uint64_t kAttackStream = 0x55;
constexpr std::uint64_t kEvalStream = 0x66;
constexpr std::uint64_t kRandLabelStream = 0x77;
constexpr std::uint64_t kMixStream = 0x88;

int argmax_lowest(const double* logits, int c) {
  int best = 0;
  for (int j = 1; j < c; ++j) {
    if (logits[j] > logits[best]) best = j;
  }
  return best;
}

double error_vs_labels(const std::vector<double>& logits, const std::vector<int>& y, int c) {
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (argmax_lowest(logits.data() + i * c, c) != y[i]) ++wrong;
  }
  return y.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(y.size());
}

struct StepOutput {
  double loss = 0.0;
  double train_err = 0.0;
  std::vector<double> grads;
};

using StepFn = std::function<StepOutput(const nn::Model&, std::size_t step)>;

enum class Selection { best_clean, best_robust };

data::Dataset head_subset(const data::Dataset& d, std::size_t k) {
  if (k == 0 || k >= d.size()) return d;
  data::Dataset out = d;
  out.labels.assign(d.labels.begin(), d.labels.begin() + static_cast<std::ptrdiff_t>(k));
  out.images.assign(d.images.begin(),
                    d.images.begin() + static_cast<std::ptrdiff_t>(k * d.image_size()));
  return out;
}

// Shared epoch/eval/checkpoint scaffolding around a per-step gradient rule.
TrainResult run_loop(const nn::ModelSpec& spec, const nn::TrainConfig& cfg,
                     const EvalPlan& plan, Selection selection, std::size_t steps_per_epoch,
                     Rng& rng, const StepFn& step_fn,
                     const data::Dataset* train_err_set = nullptr) {
  cfg.validate();
  spec.validate();
  Rng init_rng = rng.derive({kInitStream});
  TrainResult result;
  nn::Model model = nn::build_model(spec, init_rng);
  nn::SgdState sgd;

  eval::RunMetrics metrics;
  metrics.attack_names = plan.attacks;

  std::optional<data::Dataset> robust_set;
  if (plan.test != nullptr && !plan.attacks.empty()) {
    robust_set = head_subset(*plan.test, plan.robust_subset);
  }

  nn::Model best_model = model;
  bool have_best = false;
  double best_metric = -1.0;
  const auto t0 = std::chrono::steady_clock::now();

  double acc_loss = 0.0, acc_err = 0.0;
  std::size_t acc_steps = 0;
  std::size_t epoch = 0;

  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const double lr = nn::lr_at(step, cfg);
    StepOutput out;
    try {
      out = step_fn(model, step);
      nn::sgd_step(model, out.grads, lr, cfg, sgd);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("training diverged at step " + std::to_string(step) +
                               " (lr " + std::to_string(lr) + "): " + e.what());
    }
    acc_loss += out.loss;
    acc_err += out.train_err;
    ++acc_steps;

    const bool epoch_end = ((step + 1) % steps_per_epoch == 0) || (step + 1 == cfg.total_steps);
    if (!epoch_end) continue;
    ++epoch;
    const bool do_eval = (epoch % std::max<std::size_t>(plan.every_epochs, 1) == 0) ||
                         (step + 1 == cfg.total_steps);
    if (!do_eval) continue;

    eval::MetricsRow row;
    row.step = step + 1;
    row.lr = lr;
    row.train_loss = acc_loss / static_cast<double>(acc_steps);
    row.train_err = acc_err / static_cast<double>(acc_steps);
    acc_loss = acc_err = 0.0;
    acc_steps = 0;

    if (train_err_set != nullptr) {
      row.train_err = 1.0 - eval::accuracy(model, *train_err_set);
    }
    if (plan.test != nullptr) {
      row.clean_acc = eval::accuracy(model, *plan.test);
      Rng eval_rng = rng.derive({kEvalStream, epoch});
      if (robust_set) {
        // First attack column and the loss means come from one shared pass.
        auto first_cfg = attack::attack_preset(plan.attacks.front(), plan.eps);
        Rng first_rng = eval_rng.derive({std::uint64_t{0}});
        const auto scored = eval::attack_and_score(model, *robust_set, first_cfg, first_rng);
        row.robust.push_back(scored.robust_acc);
        row.beta_s = scored.beta_s;
        row.beta_a = scored.beta_a;
        for (std::size_t ai = 1; ai < plan.attacks.size(); ++ai) {
          auto acfg = attack::attack_preset(plan.attacks[ai], plan.eps);
          Rng arng = eval_rng.derive({ai});
          row.robust.push_back(eval::robust_accuracy(model, *robust_set, acfg, arng));
        }
      }
    }
    if (plan.record_wall_time) {
      row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    }
    metrics.rows.push_back(row);

    // Recording rule: adversarial runs keep the best robust accuracy strictly
    // after the first lr decay; standard runs keep the best clean accuracy.
    if (plan.test != nullptr) {
      if (selection == Selection::best_robust && !row.robust.empty()) {
        if (2 * row.step >= cfg.total_steps && row.robust[0] > best_metric) {
          best_metric = row.robust[0];
          best_model = model;
          have_best = true;
        }
      } else if (selection == Selection::best_clean) {
        if (row.clean_acc > best_metric) {
          best_metric = row.clean_acc;
          best_model = model;
          have_best = true;
        }
      }
    }
  }

  result.model = have_best ? best_model : model;
  result.metrics = std::move(metrics);
  for (const auto& row : result.metrics.rows) {
    result.best_clean_acc = std::max(result.best_clean_acc, row.clean_acc);
    if (!row.robust.empty() && 2 * row.step >= cfg.total_steps) {
      result.best_robust_acc = std::max(result.best_robust_acc, row.robust[0]);
    }
  }
  return result;
}

std::size_t epoch_steps(std::size_t dataset_size, std::size_t per_step) {
  return std::max<std::size_t>(1, (dataset_size + per_step - 1) / per_step);
}

std::vector<std::vector<double>> unif_targets(std::size_t n, int c) {
  return std::vector<std::vector<double>>(n, data::uniform_label(static_cast<std::size_t>(c)).values);
}

// Shared OAT step: sample the two halves, optionally attack them, and return
// the Algorithm-style combined gradient 1/2 grad(L_t) + alpha/2 grad(L_o).
StepOutput oat_step(const nn::Model& model, const data::Dataset& d_t, const data::Dataset& d_o,
                    const nn::TrainConfig& cfg, const OatConfig& oat, std::size_t step,
                    Rng& target_rng, Rng& ood_rng, const Rng& root,
                    nn::Batch* out_target, std::vector<int>* out_labels, nn::Batch* out_ood) {
  const std::size_t half = cfg.batch_size / 2;
  auto tb = data::sample_batch(d_t, half, target_rng);
  auto ob = data::sample_batch(d_o, half, ood_rng);

  nn::Batch target_x = std::move(tb.x);
  nn::Batch ood_x = std::move(ob.x);
  if (oat.mode == OatConfig::Mode::A) {
    Rng atk_rng = root.derive({kAttackStream, step});
    const auto adv = attack::attack_mixed_batch(
        model, target_x, tb.labels, ood_x,
        data::uniform_label(static_cast<std::size_t>(d_t.num_classes)), oat.attack, atk_rng);
    const std::size_t isz = static_cast<std::size_t>(target_x.input_size());
    std::copy(adv.inputs.x.begin(), adv.inputs.x.begin() + static_cast<std::ptrdiff_t>(half * isz),
              target_x.x.begin());
    std::copy(adv.inputs.x.begin() + static_cast<std::ptrdiff_t>(half * isz), adv.inputs.x.end(),
              ood_x.x.begin());
  }

  const auto res_t = nn::loss_and_grads(model, target_x, nn::Targets::from_hard(tb.labels),
                                        nn::LossKind{nn::LossKind::ce_hard, 0.0}, {true, false});
  const auto res_o = nn::loss_and_grads(
      model, ood_x, nn::Targets::from_soft(unif_targets(half, d_t.num_classes)),
      nn::LossKind{nn::LossKind::ce_soft, 0.0}, {true, false});

  StepOutput out;
  out.grads.resize(res_t.param_grads.size());
  for (std::size_t i = 0; i < out.grads.size(); ++i) {
    out.grads[i] = 0.5 * res_t.param_grads[i] + 0.5 * oat.alpha * res_o.param_grads[i];
  }
  out.loss = 0.5 * res_t.loss + 0.5 * oat.alpha * res_o.loss;
  out.train_err = error_vs_labels(res_t.logits, tb.labels, model.spec.num_classes);
  if (out_target) *out_target = std::move(target_x);
  if (out_labels) *out_labels = tb.labels;
  if (out_ood) *out_ood = std::move(ood_x);
  return out;
}

}  // namespace

void OatConfig::validate() const {
  if (alpha < 0.0) throw std::invalid_argument("OatConfig: alpha must be >= 0");
  if (mode == Mode::A) attack.validate();
}

void MixupOatConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("MixupOatConfig: gamma must be in [0, 1]");
  }
  if (mix_a <= 0.0) throw std::invalid_argument("MixupOatConfig: mix_a must be > 0");
}

void UidOatConfig::validate() const {
  if (alpha_in < 0.0 || alpha_o < 0.0 || alpha_uid < 0.0) {
    throw std::invalid_argument("UidOatConfig: weights must be >= 0");
  }
  attack.validate();
}

TrainResult train_standard(const nn::ModelSpec& spec, const data::Dataset& d_t,
                           const nn::TrainConfig& cfg, const EvalPlan& plan, Rng& rng) {
  Rng target_rng = rng.derive({kTargetStream});
  const auto step_fn = [&](const nn::Model& model, std::size_t) {
    auto b = data::sample_batch(d_t, cfg.batch_size, target_rng);
    const auto res = nn::loss_and_grads(model, b.x, nn::Targets::from_hard(b.labels),
                                        nn::LossKind{nn::LossKind::ce_hard, 0.0}, {true, false});
    StepOutput out;
    out.loss = res.loss;
    out.train_err = error_vs_labels(res.logits, b.labels, model.spec.num_classes);
    out.grads = res.param_grads;
    return out;
  };
  return run_loop(spec, cfg, plan, Selection::best_clean,
                  epoch_steps(d_t.size(), cfg.batch_size), rng, step_fn);
}

TrainResult train_pgd_at(const nn::ModelSpec& spec, const data::Dataset& d_t,
                         const nn::TrainConfig& cfg, const attack::AttackConfig& atk,
                         const EvalPlan& plan, Rng& rng) {
  atk.validate();
  Rng target_rng = rng.derive({kTargetStream});
  const auto step_fn = [&](const nn::Model& model, std::size_t step) {
    auto b = data::sample_batch(d_t, cfg.batch_size, target_rng);
    const auto targets = nn::Targets::from_hard(b.labels);
    Rng atk_rng = rng.derive({kAttackStream, step});
    const auto adv = attack::pgd_linf(model, b.x, targets, atk, atk_rng);
    const auto res = nn::loss_and_grads(model, adv.inputs, targets,
                                        nn::LossKind{nn::LossKind::ce_hard, 0.0}, {true, false});
    StepOutput out;
    out.loss = res.loss;
    out.train_err = error_vs_labels(res.logits, b.labels, model.spec.num_classes);
    out.grads = res.param_grads;
    return out;
  };
  return run_loop(spec, cfg, plan, Selection::best_robust,
                  epoch_steps(d_t.size(), cfg.batch_size), rng, step_fn);
}

TrainResult train_trades(const nn::ModelSpec& spec, const data::Dataset& d_t,
                         const nn::TrainConfig& cfg, const attack::AttackConfig& atk,
                         double beta, const EvalPlan& plan, Rng& rng) {
  if (beta < 0.0) throw std::invalid_argument("train_trades: beta must be >= 0");
  if (beta > 0.0 && atk.loss.tag != nn::LossKind::kl) {
    throw std::invalid_argument("train_trades: attack loss must be kl");
  }
  if (beta > 0.0) atk.validate();
  Rng target_rng = rng.derive({kTargetStream});
  const int c = spec.num_classes;
  const auto step_fn = [&](const nn::Model& model, std::size_t step) {
    auto b = data::sample_batch(d_t, cfg.batch_size, target_rng);
    const auto res_ce = nn::loss_and_grads(model, b.x, nn::Targets::from_hard(b.labels),
                                           nn::LossKind{nn::LossKind::ce_hard, 0.0}, {true, false});
    StepOutput out;
    out.train_err = error_vs_labels(res_ce.logits, b.labels, c);
    if (beta == 0.0) {
      out.loss = res_ce.loss;
      out.grads = res_ce.param_grads;
      return out;
    }
    // Reference distribution from the clean pass; the kl gradient flows only
    // through the adversarial branch.
    std::vector<std::vector<double>> ref(b.labels.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ref[i] = softmax_stable(std::span<const double>(res_ce.logits.data() + i * c, c));
    }
    const auto targets_ref = nn::Targets::from_soft(ref);
    Rng atk_rng = rng.derive({kAttackStream, step});
    const auto adv = attack::pgd_linf(model, b.x, targets_ref, atk, atk_rng);
    const auto res_kl = nn::loss_and_grads(model, adv.inputs, targets_ref,
                                           nn::LossKind{nn::LossKind::kl, 0.0}, {true, false});
    out.loss = res_ce.loss + beta * res_kl.loss;
    out.grads.resize(res_ce.param_grads.size());
    for (std::size_t i = 0; i < out.grads.size(); ++i) {
      out.grads[i] = res_ce.param_grads[i] + beta * res_kl.param_grads[i];
    }
    return out;
  };
  return run_loop(spec, cfg, plan, Selection::best_robust,
                  epoch_steps(d_t.size(), cfg.batch_size), rng, step_fn);
}

TrainResult train_oat(const nn::ModelSpec& spec, const data::Dataset& d_t,
                      const data::Dataset& d_o, const nn::TrainConfig& cfg,
                      const OatConfig& oat, const EvalPlan& plan, Rng& rng) {
  oat.validate();
  if (cfg.batch_size % 2 != 0) throw std::invalid_argument("train_oat: batch_size must be even");
  if (d_o.size() == 0) throw std::invalid_argument("train_oat: empty OOD dataset");
  Rng target_rng = rng.derive({kTargetStream});
  Rng ood_rng = rng.derive({kOodStream});
  const auto step_fn = [&](const nn::Model& model, std::size_t step) {
    return oat_step(model, d_t, d_o, cfg, oat, step, target_rng, ood_rng, rng, nullptr, nullptr,
                    nullptr);
  };
  const Selection sel =
      oat.mode == OatConfig::Mode::A ? Selection::best_robust : Selection::best_clean;
  return run_loop(spec, cfg, plan, sel, epoch_steps(d_t.size(), cfg.batch_size / 2), rng, step_fn);
}

OatStepTrace oat_single_step(nn::Model& model, const data::Dataset& d_t,
                             const data::Dataset& d_o, const nn::TrainConfig& cfg,
                             const OatConfig& oat, Rng& rng) {
  oat.validate();
  cfg.validate();
  if (cfg.batch_size % 2 != 0) {
    throw std::invalid_argument("oat_single_step: batch_size must be even");
  }
  Rng target_rng = rng.derive({kTargetStream});
  Rng ood_rng = rng.derive({kOodStream});
  OatStepTrace trace;
  trace.params_before = model.params;
  trace.lr = nn::lr_at(0, cfg);
  const auto out = oat_step(model, d_t, d_o, cfg, oat, 0, target_rng, ood_rng, rng,
                            &trace.target_batch, &trace.target_labels, &trace.ood_batch);
  trace.combined_grads = out.grads;
  nn::SgdState sgd;
  nn::sgd_step(model, out.grads, trace.lr, cfg, sgd);
  trace.params_after = model.params;
  return trace;
}

TrainResult train_oat_mixup(const nn::ModelSpec& spec, const data::Dataset& d_t,
                            const data::Dataset& d_o, const nn::TrainConfig& cfg,
                            const MixupOatConfig& mcfg, const EvalPlan& plan, Rng& rng) {
  mcfg.validate();
  const std::size_t n = cfg.batch_size;
  const std::size_t n_ood = static_cast<std::size_t>(std::floor(static_cast<double>(n) * mcfg.gamma));
  if (n_ood > 0 && d_o.size() == 0) {
    throw std::invalid_argument("train_oat_mixup: empty OOD dataset with gamma > 0");
  }
  const int c = spec.num_classes;
  Rng target_rng = rng.derive({kTargetStream});
  Rng ood_rng = rng.derive({kOodStream});
  const auto step_fn = [&](const nn::Model& model, std::size_t step) {
    auto tb = data::sample_batch(d_t, n, target_rng);
    const std::size_t isz = static_cast<std::size_t>(tb.x.input_size());

    // Permuted partner batch, with the first floor(n*gamma) permuted entries
    // replaced by OOD samples holding the uniform label.
    Rng mix_rng = rng.derive({kMixStream, step});
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(perm[i - 1], perm[mix_rng.uniform_index(i)]);
    }
    std::vector<double> partner_x(n * isz);
    std::vector<std::vector<double>> partner_y(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(tb.x.x.begin() + static_cast<std::ptrdiff_t>(perm[i] * isz),
                tb.x.x.begin() + static_cast<std::ptrdiff_t>((perm[i] + 1) * isz),
                partner_x.begin() + static_cast<std::ptrdiff_t>(i * isz));
      partner_y[i].assign(static_cast<std::size_t>(c), 0.0);
      partner_y[i][static_cast<std::size_t>(tb.labels[perm[i]])] = 1.0;
    }
    if (n_ood > 0) {
      auto ob = data::sample_batch(d_o, n_ood, ood_rng);
      const auto unif = data::uniform_label(static_cast<std::size_t>(c)).values;
      for (std::size_t i = 0; i < n_ood; ++i) {
        std::copy(ob.x.x.begin() + static_cast<std::ptrdiff_t>(i * isz),
                  ob.x.x.begin() + static_cast<std::ptrdiff_t>((i + 1) * isz),
                  partner_x.begin() + static_cast<std::ptrdiff_t>(i * isz));
        partner_y[i] = unif;
      }
    }

    nn::Batch mixed;
    mixed.n = static_cast<int>(n);
    mixed.x.resize(n * isz);
    std::vector<std::vector<double>> mixed_y(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double lam = mix_rng.beta_symmetric(mcfg.mix_a);
      for (std::size_t j = 0; j < isz; ++j) {
        mixed.x[i * isz + j] = lam * tb.x.x[i * isz + j] + (1.0 - lam) * partner_x[i * isz + j];
      }
      mixed_y[i].assign(static_cast<std::size_t>(c), 0.0);
      mixed_y[i][static_cast<std::size_t>(tb.labels[i])] = lam;
      for (int k = 0; k < c; ++k) {
        mixed_y[i][static_cast<std::size_t>(k)] += (1.0 - lam) * partner_y[i][static_cast<std::size_t>(k)];
      }
    }

    const auto res = nn::loss_and_grads(model, mixed, nn::Targets::from_soft(mixed_y),
                                        nn::LossKind{nn::LossKind::ce_soft, 0.0}, {true, false});
    StepOutput out;
    out.loss = res.loss;
    out.train_err = error_vs_labels(res.logits, tb.labels, c);
    out.grads = res.param_grads;
    return out;
  };
  return run_loop(spec, cfg, plan, Selection::best_clean, epoch_steps(d_t.size(), n), rng, step_fn);
}

TrainResult train_oat_uid(const nn::ModelSpec& spec, const data::Dataset& d_t,
                          const data::Dataset& d_o, const data::Dataset& d_uid,
                          const nn::TrainConfig& cfg, const UidOatConfig& ucfg,
                          const EvalPlan& plan, Rng& rng) {
  ucfg.validate();
  if (cfg.batch_size % 4 != 0) {
    throw std::invalid_argument("train_oat_uid: batch_size must be divisible by 4");
  }
  if (ucfg.alpha_o > 0.0 && d_o.size() == 0) {
    throw std::invalid_argument("train_oat_uid: empty OOD dataset with alpha_o > 0");
  }
  if (ucfg.alpha_uid > 0.0 && d_uid.size() == 0) {
    throw std::invalid_argument("train_oat_uid: empty UID dataset with alpha_uid > 0");
  }
  for (std::size_t i = 0; i < d_uid.size(); ++i) {
    if (d_uid.is_ood(i)) {
      throw std::invalid_argument("train_oat_uid: UID dataset must carry pseudo-labels");
    }
  }

  // Batch split 2:1:1 (target : uid : ood); an inactive term returns its
  // share to the other minor term so the two-term reductions hold exactly.
  const std::size_t half = cfg.batch_size / 2;
  const std::size_t quarter = cfg.batch_size / 4;
  const bool use_ood = ucfg.alpha_o > 0.0;
  const bool use_uid = ucfg.alpha_uid > 0.0;
  const std::size_t n_ood = use_ood ? (use_uid ? quarter : half) : 0;
  const std::size_t n_uid = use_uid ? (use_ood ? quarter : half) : 0;

  const int c = spec.num_classes;
  Rng target_rng = rng.derive({kTargetStream});
  Rng ood_rng = rng.derive({kOodStream});
  Rng uid_rng = rng.derive({kUidStream});

  const auto step_fn = [&](const nn::Model& model, std::size_t step) {
    auto tb = data::sample_batch(d_t, half, target_rng);
    StepOutput out;
    std::vector<double> grads(model.param_count(), 0.0);
    double loss = 0.0;

    Rng atk_rng = rng.derive({kAttackStream, step});
    if (use_ood) {
      auto ob = data::sample_batch(d_o, n_ood, ood_rng);
      const auto adv = attack::attack_mixed_batch(
          model, tb.x, tb.labels, ob.x, data::uniform_label(static_cast<std::size_t>(c)),
          ucfg.attack, atk_rng);
      const std::size_t isz = static_cast<std::size_t>(tb.x.input_size());
      nn::Batch adv_t, adv_o;
      adv_t.n = static_cast<int>(half);
      adv_t.x.assign(adv.inputs.x.begin(),
                     adv.inputs.x.begin() + static_cast<std::ptrdiff_t>(half * isz));
      adv_o.n = static_cast<int>(n_ood);
      adv_o.x.assign(adv.inputs.x.begin() + static_cast<std::ptrdiff_t>(half * isz),
                     adv.inputs.x.end());
      const auto res_t = nn::loss_and_grads(model, adv_t, nn::Targets::from_hard(tb.labels),
                                            nn::LossKind{nn::LossKind::ce_hard, 0.0}, {true, false});
      const auto res_o = nn::loss_and_grads(
          model, adv_o, nn::Targets::from_soft(unif_targets(n_ood, c)),
          nn::LossKind{nn::LossKind::ce_soft, 0.0}, {true, false});
      for (std::size_t i = 0; i < grads.size(); ++i) {
        grads[i] += ucfg.alpha_in * res_t.param_grads[i] + ucfg.alpha_o * res_o.param_grads[i];
      }
      loss += ucfg.alpha_in * res_t.loss + ucfg.alpha_o * res_o.loss;
      out.train_err = error_vs_labels(res_t.logits, tb.labels, c);
    } else {
      const auto targets = nn::Targets::from_hard(tb.labels);
      const auto adv = attack::pgd_linf(model, tb.x, targets, ucfg.attack, atk_rng);
      const auto res_t = nn::loss_and_grads(model, adv.inputs, targets,
                                            nn::LossKind{nn::LossKind::ce_hard, 0.0}, {true, false});
      for (std::size_t i = 0; i < grads.size(); ++i) {
        grads[i] += ucfg.alpha_in * res_t.param_grads[i];
      }
      loss += ucfg.alpha_in * res_t.loss;
      out.train_err = error_vs_labels(res_t.logits, tb.labels, c);
    }

    if (use_uid) {
      auto ub = data::sample_batch(d_uid, n_uid, uid_rng);
      const auto targets = nn::Targets::from_hard(ub.labels);
      Rng uatk_rng = rng.derive({kAttackStream, step, 0x0d});
      const auto adv = attack::pgd_linf(model, ub.x, targets, ucfg.attack, uatk_rng);
      const auto res_u = nn::loss_and_grads(model, adv.inputs, targets,
                                            nn::LossKind{nn::LossKind::ce_hard, 0.0}, {true, false});
      for (std::size_t i = 0; i < grads.size(); ++i) {
        grads[i] += ucfg.alpha_uid * res_u.param_grads[i];
      }
      loss += ucfg.alpha_uid * res_u.loss;
    }

    out.loss = loss;
    out.grads = std::move(grads);
    return out;
  };
  return run_loop(spec, cfg, plan, Selection::best_robust, epoch_steps(d_t.size(), half), rng,
                  step_fn);
}

eval::RunMetrics randomization_test(const nn::ModelSpec& spec, const data::Dataset& d_t,
                                    const data::Dataset& d_o, const nn::TrainConfig& cfg,
                                    bool with_oat, const EvalPlan& plan, Rng& rng) {
  Rng label_rng = rng.derive({kRandLabelStream});
  const data::Dataset randomized = data::randomize_labels(d_t, label_rng);

  if (!with_oat) {
    Rng target_rng = rng.derive({kTargetStream});
    const auto step_fn = [&](const nn::Model& model, std::size_t) {
      auto b = data::sample_batch(randomized, cfg.batch_size, target_rng);
      const auto res = nn::loss_and_grads(model, b.x, nn::Targets::from_hard(b.labels),
                                          nn::LossKind{nn::LossKind::ce_hard, 0.0}, {true, false});
      StepOutput out;
      out.loss = res.loss;
      out.train_err = error_vs_labels(res.logits, b.labels, model.spec.num_classes);
      out.grads = res.param_grads;
      return out;
    };
    return run_loop(spec, cfg, plan, Selection::best_clean,
                    epoch_steps(randomized.size(), cfg.batch_size), rng, step_fn, &randomized)
        .metrics;
  }

  OatConfig oat;
  oat.mode = OatConfig::Mode::S;
  oat.alpha = 1.0;
  Rng target_rng = rng.derive({kTargetStream});
  Rng ood_rng = rng.derive({kOodStream});
  const auto step_fn = [&](const nn::Model& model, std::size_t step) {
    return oat_step(model, randomized, d_o, cfg, oat, step, target_rng, ood_rng, rng, nullptr,
                    nullptr, nullptr);
  };
  return run_loop(spec, cfg, plan, Selection::best_clean,
                  epoch_steps(randomized.size(), cfg.batch_size / 2), rng, step_fn, &randomized)
      .metrics;
}

}  // namespace oat::train
