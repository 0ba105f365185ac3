// Training procedures: standard ERM, PGD adversarial training, TRADES, the
// OOD-augmented objectives (OAT-A / OAT-S, OAT+Mixup, OAT+UID) and the
// random-label memorization test.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oat/attack.hpp"
#include "oat/dataset.hpp"
#include "oat/evaluate.hpp"
#include "oat/model.hpp"
#include "oat/optim.hpp"
#include "oat/rng.hpp"

namespace oat::train {

struct OatConfig {
  double alpha = 1.0;
  enum class Mode { A, S } mode = Mode::A;
  attack::AttackConfig attack;  // mode A only

  void validate() const;
};

struct MixupOatConfig {
  double gamma = 0.6;  // OOD replacement ratio in [0, 1]
  double mix_a = 1.0;  // Beta(mix_a, mix_a) concentration

  void validate() const;
};

struct UidOatConfig {
  double alpha_in = 1.0 / 3.0;
  double alpha_o = 1.0 / 3.0;
  double alpha_uid = 1.0 / 3.0;
  attack::AttackConfig attack;

  void validate() const;
};

// What to measure at epoch boundaries.
struct EvalPlan {
  const data::Dataset* test = nullptr;
  std::vector<std::string> attacks;   // preset names, e.g. {"PGD10"}
  double eps = 8.0 / 255.0;
  std::size_t robust_subset = 250;    // 0 = full test set
  std::size_t every_epochs = 1;
  bool record_wall_time = false;      // off: wall_ms column stays 0 so metrics
                                      // files depend only on config and seed
};

struct TrainResult {
  nn::Model model;  // best checkpoint under the recording rule
  eval::RunMetrics metrics;
  double best_clean_acc = 0.0;
  double best_robust_acc = 0.0;  // max over epochs after the first lr decay
};

TrainResult train_standard(const nn::ModelSpec& spec, const data::Dataset& d_t,
                           const nn::TrainConfig& cfg, const EvalPlan& eval_plan, Rng& rng);

TrainResult train_pgd_at(const nn::ModelSpec& spec, const data::Dataset& d_t,
                         const nn::TrainConfig& cfg, const attack::AttackConfig& atk,
                         const EvalPlan& eval_plan, Rng& rng);

TrainResult train_trades(const nn::ModelSpec& spec, const data::Dataset& d_t,
                         const nn::TrainConfig& cfg, const attack::AttackConfig& atk,
                         double beta, const EvalPlan& eval_plan, Rng& rng);

TrainResult train_oat(const nn::ModelSpec& spec, const data::Dataset& d_t,
                      const data::Dataset& d_o, const nn::TrainConfig& cfg,
                      const OatConfig& oat, const EvalPlan& eval_plan, Rng& rng);

TrainResult train_oat_mixup(const nn::ModelSpec& spec, const data::Dataset& d_t,
                            const data::Dataset& d_o, const nn::TrainConfig& cfg,
                            const MixupOatConfig& mcfg, const EvalPlan& eval_plan, Rng& rng);

TrainResult train_oat_uid(const nn::ModelSpec& spec, const data::Dataset& d_t,
                          const data::Dataset& d_o, const data::Dataset& d_uid,
                          const nn::TrainConfig& cfg, const UidOatConfig& ucfg,
                          const EvalPlan& eval_plan, Rng& rng);

// Trains on a random-label copy of d_t (standard, or OAT-S with alpha = 1
// when with_oat is set) and reports the training-error curve; train_err rows
// are measured on the full random-label copy.
eval::RunMetrics randomization_test(const nn::ModelSpec& spec, const data::Dataset& d_t,
                                    const data::Dataset& d_o, const nn::TrainConfig& cfg,
                                    bool with_oat, const EvalPlan& eval_plan, Rng& rng);

// One OAT gradient step starting from the given model; exposed so the
// step weighting can be checked against an independently assembled gradient.
struct OatStepTrace {
  std::vector<double> params_before;
  std::vector<double> params_after;
  std::vector<double> combined_grads;
  double lr = 0.0;
  // The exact (post-attack, for mode A) half-batches the step trained on.
  nn::Batch target_batch;
  std::vector<int> target_labels;
  nn::Batch ood_batch;
};

OatStepTrace oat_single_step(nn::Model& model, const data::Dataset& d_t,
                             const data::Dataset& d_o, const nn::TrainConfig& cfg,
                             const OatConfig& oat, Rng& rng);

}  // namespace oat::train
