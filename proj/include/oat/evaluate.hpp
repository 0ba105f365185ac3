// Clean and robust accuracy, empirical estimates of the expected standard and
// adversarial losses, and metrics serialization.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "oat/attack.hpp"
#include "oat/dataset.hpp"
#include "oat/model.hpp"
#include "oat/rng.hpp"

namespace oat::eval {

// Argmax-logit agreement rate; ties break toward the lowest class index.
double accuracy(const nn::Model& model, const data::Dataset& d);

// Accuracy on attacked inputs; a sample is robust only when it is still
// classified correctly after the attack. eps = 0 reduces to accuracy exactly.
double robust_accuracy(const nn::Model& model, const data::Dataset& d,
                       const attack::AttackConfig& cfg, Rng& rng);

struct ExpectedLossEstimate {
  double beta_s = 0.0;
  double beta_a = 0.0;
};

// One attack pass yielding clean accuracy, robust accuracy and the ce-hard
// loss means on the same samples (the adversarial loss is re-scored with
// ce-hard on the returned iterates). Shares the per-batch stream derivation
// of robust_accuracy.
struct SubsetEvalResult {
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  double beta_s = 0.0;
  double beta_a = 0.0;
};

SubsetEvalResult attack_and_score(const nn::Model& model, const data::Dataset& d,
                                  const attack::AttackConfig& cfg, Rng& rng);

// Mean ce-hard loss on clean inputs and on best-iterate attacked inputs over
// the same samples; the attack loss is forced to ce-hard, so beta_a >= beta_s.
ExpectedLossEstimate estimate_expected_losses(const nn::Model& model, const data::Dataset& d,
                                              const attack::AttackConfig& cfg, Rng& rng);

struct EvalReport {
  double clean_acc = 0.0;
  std::vector<std::pair<std::string, double>> robust_acc;  // attack name -> accuracy
  double beta_s = 0.0;
  double beta_a = 0.0;
  std::size_t n_eval = 0;

  std::string to_text() const;
  static EvalReport from_text(const std::string& text);
};

// Runs the named attack presets (e.g. {"PGD20", "CW20"}) at the given eps and
// assembles the full report. Attack streams derive from (rng, attack index),
// so reports are reproducible for a fixed evaluation seed.
EvalReport evaluate(const nn::Model& model, const data::Dataset& d,
                    const std::vector<std::string>& attack_names, double eps, Rng& rng);

// One evaluation point of a training run.
struct MetricsRow {
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_err = 0.0;
  double clean_acc = 0.0;
  std::vector<double> robust;  // one entry per attack column
  double beta_s = 0.0;
  double beta_a = 0.0;
  std::int64_t wall_ms = 0;
};

struct RunMetrics {
  std::vector<std::string> attack_names;  // column names
  std::vector<MetricsRow> rows;

  // header: step,lr,train_loss,train_err,clean_acc,<attacks...>,beta_s,beta_a,wall_ms
  std::string to_csv() const;
  void save_csv(const std::string& path) const;
};

}  // namespace oat::eval
