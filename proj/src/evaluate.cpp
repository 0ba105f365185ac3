#include "oat/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace oat::eval {

namespace {

constexpr std::size_t kEvalBatch = 256;

int argmax_lowest(const double* logits, int c) {
  int best = 0;
  for (int j = 1; j < c; ++j) {
    if (logits[j] > logits[best]) best = j;
  }
  return best;
}

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double accuracy(const nn::Model& model, const data::Dataset& d) {
  if (d.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
  const int c = model.spec.num_classes;
  std::size_t correct = 0;
  for (std::size_t base = 0; base < d.size(); base += kEvalBatch) {
    const std::size_t e = std::min(d.size(), base + kEvalBatch);
    nn::Batch b;
    b.n = static_cast<int>(e - base);
    const std::size_t isz = d.image_size();
    b.x.resize((e - base) * isz);
    for (std::size_t i = base; i < e; ++i) {
      const std::uint8_t* img = d.image(i);
      for (std::size_t j = 0; j < isz; ++j) b.x[(i - base) * isz + j] = img[j] / 255.0;
    }
    const auto logits = nn::forward(model, b);
    for (std::size_t i = base; i < e; ++i) {
      const int pred = argmax_lowest(logits.data() + (i - base) * c, c);
      if (pred == d.class_label(i)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

double robust_accuracy(const nn::Model& model, const data::Dataset& d,
                       const attack::AttackConfig& cfg, Rng& rng) {
  if (d.size() == 0) throw std::invalid_argument("robust_accuracy: empty dataset");
  cfg.validate();
  const int c = model.spec.num_classes;
  std::size_t correct = 0;
  const std::size_t isz = d.image_size();
  std::size_t batch_index = 0;
  for (std::size_t base = 0; base < d.size(); base += kEvalBatch, ++batch_index) {
    const std::size_t e = std::min(d.size(), base + kEvalBatch);
    nn::Batch b;
    b.n = static_cast<int>(e - base);
    b.x.resize((e - base) * isz);
    std::vector<int> y(e - base);
    for (std::size_t i = base; i < e; ++i) {
      const std::uint8_t* img = d.image(i);
      for (std::size_t j = 0; j < isz; ++j) b.x[(i - base) * isz + j] = img[j] / 255.0;
      y[i - base] = d.class_label(i);
    }
    Rng batch_rng = rng.derive({0xa77ac3, batch_index});
    const auto adv = attack::pgd_linf(model, b, nn::Targets::from_hard(y), cfg, batch_rng);
    const auto logits = nn::forward(model, adv.inputs);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const int pred = argmax_lowest(logits.data() + i * c, c);
      if (pred == y[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

ExpectedLossEstimate estimate_expected_losses(const nn::Model& model, const data::Dataset& d,
                                              const attack::AttackConfig& cfg, Rng& rng) {
  if (d.size() == 0) throw std::invalid_argument("estimate_expected_losses: empty dataset");
  attack::AttackConfig ce_cfg = cfg;
  ce_cfg.loss = nn::LossKind{nn::LossKind::ce_hard, 0.0};
  const std::size_t isz = d.image_size();
  double sum_s = 0.0, sum_a = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t base = 0; base < d.size(); base += kEvalBatch, ++batch_index) {
    const std::size_t e = std::min(d.size(), base + kEvalBatch);
    nn::Batch b;
    b.n = static_cast<int>(e - base);
    b.x.resize((e - base) * isz);
    std::vector<int> y(e - base);
    for (std::size_t i = base; i < e; ++i) {
      const std::uint8_t* img = d.image(i);
      for (std::size_t j = 0; j < isz; ++j) b.x[(i - base) * isz + j] = img[j] / 255.0;
      y[i - base] = d.class_label(i);
    }
    const auto targets = nn::Targets::from_hard(y);
    const auto clean = nn::loss_and_grads(model, b, targets, ce_cfg.loss, {false, false});
    Rng batch_rng = rng.derive({0xbe7a, batch_index});
    const auto adv = attack::pgd_linf(model, b, targets, ce_cfg, batch_rng);
    for (std::size_t i = 0; i < y.size(); ++i) {
      sum_s += clean.per_sample[i];
      sum_a += cfg.eps == 0.0 ? clean.per_sample[i] : adv.best_loss[i];
    }
  }
  ExpectedLossEstimate out;
  out.beta_s = sum_s / static_cast<double>(d.size());
  out.beta_a = sum_a / static_cast<double>(d.size());
  return out;
}

SubsetEvalResult attack_and_score(const nn::Model& model, const data::Dataset& d,
                                  const attack::AttackConfig& cfg, Rng& rng) {
  if (d.size() == 0) throw std::invalid_argument("attack_and_score: empty dataset");
  cfg.validate();
  const int c = model.spec.num_classes;
  const std::size_t isz = d.image_size();
  const nn::LossKind ce{nn::LossKind::ce_hard, 0.0};
  std::size_t clean_correct = 0, robust_correct = 0;
  double sum_s = 0.0, sum_a = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t base = 0; base < d.size(); base += kEvalBatch, ++batch_index) {
    const std::size_t e = std::min(d.size(), base + kEvalBatch);
    nn::Batch b;
    b.n = static_cast<int>(e - base);
    b.x.resize((e - base) * isz);
    std::vector<int> y(e - base);
    for (std::size_t i = base; i < e; ++i) {
      const std::uint8_t* img = d.image(i);
      for (std::size_t j = 0; j < isz; ++j) b.x[(i - base) * isz + j] = img[j] / 255.0;
      y[i - base] = d.class_label(i);
    }
    const auto targets = nn::Targets::from_hard(y);
    const auto clean = nn::loss_and_grads(model, b, targets, ce, {false, false});
    Rng batch_rng = rng.derive({0xa77ac3, batch_index});
    const auto adv = attack::pgd_linf(model, b, targets, cfg, batch_rng);
    const auto adv_ce = nn::loss_and_grads(model, adv.inputs, targets, ce, {false, false});
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (argmax_lowest(clean.logits.data() + i * c, c) == y[i]) ++clean_correct;
      if (argmax_lowest(adv_ce.logits.data() + i * c, c) == y[i]) ++robust_correct;
      sum_s += clean.per_sample[i];
      sum_a += adv_ce.per_sample[i];
    }
  }
  SubsetEvalResult out;
  const double n = static_cast<double>(d.size());
  out.clean_acc = clean_correct / n;
  out.robust_acc = robust_correct / n;
  out.beta_s = sum_s / n;
  out.beta_a = sum_a / n;
  return out;
}

std::string EvalReport::to_text() const {
  std::string out;
  out += "n_eval " + std::to_string(n_eval) + "\n";
  out += "clean_acc " + fmt_g17(clean_acc) + "\n";
  for (const auto& [name, acc] : robust_acc) {
    out += "robust " + name + " " + fmt_g17(acc) + "\n";
  }
  out += "beta_s " + fmt_g17(beta_s) + "\n";
  out += "beta_a " + fmt_g17(beta_a) + "\n";
  return out;
}

EvalReport EvalReport::from_text(const std::string& text) {
  EvalReport rep;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "n_eval") {
      ls >> rep.n_eval;
    } else if (key == "clean_acc") {
      ls >> rep.clean_acc;
    } else if (key == "robust") {
      std::string name;
      double acc = 0.0;
      ls >> name >> acc;
      rep.robust_acc.emplace_back(name, acc);
    } else if (key == "beta_s") {
      ls >> rep.beta_s;
    } else if (key == "beta_a") {
      ls >> rep.beta_a;
    } else {
      throw std::runtime_error("EvalReport: unknown key " + key);
    }
    if (ls.fail()) throw std::runtime_error("EvalReport: malformed line: " + line);
  }
  return rep;
}

EvalReport evaluate(const nn::Model& model, const data::Dataset& d,
                    const std::vector<std::string>& attack_names, double eps, Rng& rng) {
  EvalReport rep;
  rep.n_eval = d.size();
  rep.clean_acc = accuracy(model, d);
  std::size_t idx = 0;
  for (const auto& name : attack_names) {
    auto cfg = attack::attack_preset(name, eps);
    Rng arng = rng.derive({0xe7a1, idx++});
    rep.robust_acc.emplace_back(name, robust_accuracy(model, d, cfg, arng));
  }
  auto beta_cfg = attack_names.empty() ? attack::attack_preset("PGD20", eps)
                                       : attack::attack_preset(attack_names.front(), eps);
  beta_cfg.eps = eps;
  Rng brng = rng.derive({0xbe7a5});
  const auto beta = estimate_expected_losses(model, d, beta_cfg, brng);
  rep.beta_s = beta.beta_s;
  rep.beta_a = beta.beta_a;
  return rep;
}

std::string RunMetrics::to_csv() const {
  std::string out = "step,lr,train_loss,train_err,clean_acc";
  for (const auto& name : attack_names) out += "," + name;
  out += ",beta_s,beta_a,wall_ms\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step);
    out += "," + fmt_g17(r.lr);
    out += "," + fmt_g17(r.train_loss);
    out += "," + fmt_g17(r.train_err);
    out += "," + fmt_g17(r.clean_acc);
    for (double v : r.robust) out += "," + fmt_g17(v);
    out += "," + fmt_g17(r.beta_s);
    out += "," + fmt_g17(r.beta_a);
    out += "," + std::to_string(r.wall_ms) + "\n";
  }
  return out;
}

void RunMetrics::save_csv(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("RunMetrics: cannot open " + path + " for writing");
  os << to_csv();
  if (!os) throw std::runtime_error("RunMetrics: write failed for " + path);
}

}  // namespace oat::eval
