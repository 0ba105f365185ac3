// Command-line front end: theorem verification, dataset generation, training,
// evaluation and the randomization test, all driven by a flat key = value
// config with per-key overrides.
//
// Exit codes: 0 success, 1 validation failure, 2 numeric failure
// (divergence / approximation regime / tolerance), 3 I/O failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "oat/attack.hpp"
#include "oat/config.hpp"
#include "oat/dataset.hpp"
#include "oat/evaluate.hpp"
#include "oat/model.hpp"
#include "oat/optim.hpp"
#include "oat/rng.hpp"
#include "oat/synthetic.hpp"
#include "oat/train.hpp"

namespace {

namespace fs = std::filesystem;
using oat::config::ExperimentConfig;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitIo = 3;

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  ExperimentConfig cfg;
  if (!path.empty()) cfg = ExperimentConfig::from_file(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects key=value, got: " + kv);
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out + ": " + ec.message());
}

oat::attack::AttackConfig attack_from_config(ExperimentConfig& cfg, const std::string& loss_def) {
  oat::attack::AttackConfig atk;
  atk.eps = cfg.get_double("attack.eps", 8.0 / 255.0);
  atk.steps = static_cast<std::size_t>(cfg.get_int("attack.steps", 10));
  atk.step_size = cfg.get_double("attack.step_size", 2.0 / 255.0);
  atk.random_start = cfg.get_bool("attack.random_start", true);
  atk.restarts = static_cast<std::size_t>(cfg.get_int("attack.restarts", 1));
  atk.loss = oat::nn::LossKind::from_name(cfg.get_string("attack.loss", loss_def),
                                          cfg.get_double("attack.kappa", 0.0));
  return atk;
}

oat::nn::TrainConfig train_from_config(ExperimentConfig& cfg) {
  oat::nn::TrainConfig tc;
  tc.base_lr = cfg.get_double("train.base_lr", 0.1);
  tc.total_steps = static_cast<std::size_t>(cfg.get_int("train.total_steps", 2000));
  tc.batch_size = static_cast<std::size_t>(cfg.get_int("train.batch_size", 64));
  tc.momentum = cfg.get_double("train.momentum", 0.9);
  tc.weight_decay = cfg.get_double("train.weight_decay", 2e-4);
  tc.seed = cfg.get_u64("seed", 0);
  return tc;
}

oat::nn::ModelSpec model_from_config(ExperimentConfig& cfg, const oat::data::Dataset& d) {
  oat::nn::ModelSpec spec;
  spec.kind = oat::nn::kind_from_name(cfg.get_string("model", "cnn-small"));
  spec.channels = d.channels;
  spec.height = d.height;
  spec.width = d.width;
  spec.num_classes = d.num_classes;
  const std::vector<std::string> def_hidden =
      spec.kind == oat::nn::ModelKind::mlp ? std::vector<std::string>{"64"}
                                           : std::vector<std::string>{};
  spec.hidden.clear();
  for (const auto& h : cfg.get_list("model.hidden", def_hidden)) {
    spec.hidden.push_back(std::stoi(h));
  }
  return spec;
}

oat::train::EvalPlan eval_plan_from_config(ExperimentConfig& cfg, const oat::data::Dataset* test,
                                           bool adversarial_mode) {
  oat::train::EvalPlan plan;
  plan.test = test;
  const std::vector<std::string> def_attacks =
      adversarial_mode ? std::vector<std::string>{"PGD10"} : std::vector<std::string>{};
  plan.attacks = cfg.get_list("eval.attacks", def_attacks);
  plan.eps = cfg.get_double("eval.eps", 8.0 / 255.0);
  plan.robust_subset = static_cast<std::size_t>(cfg.get_int("eval.robust_subset", 250));
  plan.every_epochs = static_cast<std::size_t>(cfg.get_int("eval.every_epochs", 1));
  plan.record_wall_time = cfg.get_bool("eval.record_wall_time", false);
  return plan;
}

int cmd_verify(ExperimentConfig& cfg, const std::string& out) {
  using namespace oat::synthetic;
  const auto names = cfg.get_list("verify.theorems", {"t1", "t2", "t3", "b4", "b5"});
  TheoremSetup setup;
  setup.n_samples = static_cast<std::size_t>(cfg.get_int("verify.n_samples", 100000));
  setup.ood.eta = cfg.get_double("verify.eta", 1.0);
  setup.ood.d = static_cast<std::size_t>(cfg.get_int("verify.d", 64));
  setup.ood.u = cfg.get_double("verify.u", 0.1);
  setup.ood.v = cfg.get_double("verify.v", 0.1);
  setup.attack.lambda = cfg.get_double("verify.lambda", 0.5);
  setup.attack.t = cfg.get_double("verify.t", 0.5);
  setup.std_model.sigma1 = cfg.get_double("verify.sigma1", 0.1);
  setup.std_model.sigma2 = cfg.get_double("verify.sigma2", 1.0);
  setup.std_model.kappa = cfg.get_double("verify.kappa", 1.0);
  setup.options.saturation_z = cfg.get_double("verify.saturation_z", 3.0);
  setup.options.min_saturation = cfg.get_double("verify.min_saturation", 0.99);
  setup.options.rel_tol = cfg.get_double("verify.rel_tol", 0.05);
  setup.options.t1_rel_tol = cfg.get_double("verify.t1_rel_tol", 0.02);
  setup.options.se_multiplier = cfg.get_double("verify.se_mult", 3.0);
  const double w1_small = cfg.get_double("verify.w1_small", 0.01);
  const double w2 = cfg.get_double("verify.w2", 1.0);
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  cfg.ensure_all_consumed();
  cfg.write_resolved(out + "/config_resolved.txt");

  bool all_pass = true;
  bool any_regime = false;
  std::size_t idx = 0;
  for (const auto& name : names) {
    const TheoremId id = theorem_from_name(name);
    TheoremSetup s = setup;
    if (id == TheoremId::B4 || id == TheoremId::B5) {
      s.clf.w = {w1_small, w2};
    }
    oat::Rng rng(seed, 0x7e0 + idx);
    const auto rep = verify_theorem(id, s, rng);
    const std::string path = out + "/verify_" + rep.theorem + ".txt";
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << rep.to_text();
    std::printf("[%s] %s: %s\n", rep.pass ? "PASS" : "FAIL", rep.theorem.c_str(),
                rep.status.c_str());
    all_pass = all_pass && rep.pass;
    any_regime = any_regime || !rep.regime_ok;
    ++idx;
  }
  if (all_pass) return kExitOk;
  std::fprintf(stderr, any_regime ? "verify: approximation regime not met for some theorems\n"
                                  : "verify: tolerance exceeded for some theorems\n");
  return kExitNumeric;
}

int cmd_gen(ExperimentConfig& cfg, const std::string& out) {
  using namespace oat::data;
  const std::string mine_pool = cfg.get_string("mine.pool", "");
  if (!mine_pool.empty()) {
    const std::string target_path = cfg.require_string("mine.target");
    const std::size_t keep = static_cast<std::size_t>(cfg.get_int("mine.keep", 1000));
    oat::nn::TrainConfig tc;
    tc.base_lr = cfg.get_double("mine.base_lr", 0.05);
    tc.total_steps = static_cast<std::size_t>(cfg.get_int("mine.total_steps", 500));
    tc.batch_size = static_cast<std::size_t>(cfg.get_int("mine.batch_size", 64));
    tc.momentum = cfg.get_double("mine.momentum", 0.9);
    tc.weight_decay = cfg.get_double("mine.weight_decay", 2e-4);
    const std::uint64_t seed = cfg.get_u64("seed", 0);
    cfg.ensure_all_consumed();
    const Dataset pool = load_oatd(mine_pool);
    const Dataset target = load_oatd(target_path);
    oat::Rng rng(seed, 0x313e);
    const Dataset mined = mine_ood(pool, target, keep, tc, rng);
    save_oatd(mined, out + "/mined.oatd");
    cfg.write_resolved(out + "/config_resolved.txt");
    std::printf("mined %zu of %zu pool images -> %s/mined.oatd\n", mined.size(), pool.size(),
                out.c_str());
    return kExitOk;
  }

  SynthSpec spec;
  spec.num_classes = static_cast<int>(cfg.get_int("synth.num_classes", 4));
  spec.channels = static_cast<int>(cfg.get_int("synth.channels", 3));
  spec.height = static_cast<int>(cfg.get_int("synth.height", 16));
  spec.width = static_cast<int>(cfg.get_int("synth.width", 16));
  spec.num_nuisance = static_cast<int>(cfg.get_int("synth.num_nuisance", 32));
  spec.rho = cfg.get_double("synth.rho", 0.2);
  spec.noise_std = cfg.get_double("synth.noise_std", 0.05);
  spec.template_amp = cfg.get_double("synth.template_amp", 0.30);
  spec.nuisance_amp = cfg.get_double("synth.nuisance_amp", 0.10);
  spec.n_train = static_cast<std::size_t>(cfg.get_int("synth.n_train", 2000));
  spec.n_test = static_cast<std::size_t>(cfg.get_int("synth.n_test", 1000));
  spec.n_ood = static_cast<std::size_t>(cfg.get_int("synth.n_ood", 4000));
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  cfg.ensure_all_consumed();

  oat::Rng rng(seed, 0x9e4);
  const auto data = gen_synthetic(spec, rng);
  save_oatd(data.train, out + "/train.oatd");
  save_oatd(data.test, out + "/test.oatd");
  save_oatd(data.ood, out + "/ood.oatd");
  cfg.write_resolved(out + "/config_resolved.txt");
  std::printf("generated train=%zu test=%zu ood=%zu -> %s\n", data.train.size(),
              data.test.size(), data.ood.size(), out.c_str());
  return kExitOk;
}

int cmd_train(ExperimentConfig& cfg, const std::string& out) {
  using oat::data::Dataset;
  const std::string mode = cfg.get_string("mode", "standard");
  const bool needs_ood = mode == "oat-a" || mode == "oat-s" || mode == "oat-mixup" ||
                         mode == "oat-uid";
  const bool adversarial = mode == "pgd" || mode == "trades" || mode == "oat-a" ||
                           mode == "oat-uid";

  const Dataset d_t = oat::data::load_oatd(cfg.require_string("data.train"));
  Dataset d_test;
  const std::string test_path = cfg.get_string("data.test", "");
  if (!test_path.empty()) d_test = oat::data::load_oatd(test_path);
  Dataset d_o;
  if (needs_ood) d_o = oat::data::load_oatd(cfg.require_string("data.ood"));
  Dataset d_uid;
  if (mode == "oat-uid") d_uid = oat::data::load_oatd(cfg.require_string("data.uid"));

  const auto spec = model_from_config(cfg, d_t);
  const auto tc = train_from_config(cfg);
  const auto plan = eval_plan_from_config(cfg, test_path.empty() ? nullptr : &d_test, adversarial);
  oat::Rng rng(tc.seed, 0x7a19);

  oat::train::TrainResult result;
  if (mode == "standard") {
    cfg.ensure_all_consumed();
    result = oat::train::train_standard(spec, d_t, tc, plan, rng);
  } else if (mode == "pgd") {
    const auto atk = attack_from_config(cfg, "ce-hard");
    cfg.ensure_all_consumed();
    result = oat::train::train_pgd_at(spec, d_t, tc, atk, plan, rng);
  } else if (mode == "trades") {
    const auto atk = attack_from_config(cfg, "kl");
    const double beta = cfg.get_double("trades.beta", 6.0);
    cfg.ensure_all_consumed();
    result = oat::train::train_trades(spec, d_t, tc, atk, beta, plan, rng);
  } else if (mode == "oat-a" || mode == "oat-s") {
    oat::train::OatConfig oc;
    oc.mode = mode == "oat-a" ? oat::train::OatConfig::Mode::A : oat::train::OatConfig::Mode::S;
    oc.alpha = cfg.get_double("oat.alpha", 1.0);
    if (oc.mode == oat::train::OatConfig::Mode::A) oc.attack = attack_from_config(cfg, "ce-hard");
    cfg.ensure_all_consumed();
    result = oat::train::train_oat(spec, d_t, d_o, tc, oc, plan, rng);
  } else if (mode == "oat-mixup") {
    oat::train::MixupOatConfig mc;
    mc.gamma = cfg.get_double("mixup.gamma", 0.6);
    mc.mix_a = cfg.get_double("mixup.mix_a", 1.0);
    cfg.ensure_all_consumed();
    result = oat::train::train_oat_mixup(spec, d_t, d_o, tc, mc, plan, rng);
  } else if (mode == "oat-uid") {
    oat::train::UidOatConfig uc;
    uc.alpha_in = cfg.get_double("uid.alpha_in", 1.0 / 3.0);
    uc.alpha_o = cfg.get_double("uid.alpha_o", 1.0 / 3.0);
    uc.alpha_uid = cfg.get_double("uid.alpha_uid", 1.0 / 3.0);
    uc.attack = attack_from_config(cfg, "ce-hard");
    cfg.ensure_all_consumed();
    result = oat::train::train_oat_uid(spec, d_t, d_o, d_uid, tc, uc, plan, rng);
  } else {
    throw std::invalid_argument("unknown mode: " + mode);
  }

  result.metrics.save_csv(out + "/metrics.csv");
  oat::nn::save_checkpoint(result.model, out + "/model.oatm");
  cfg.write_resolved(out + "/config_resolved.txt");
  std::printf("mode=%s best_clean=%.4f best_robust=%.4f rows=%zu -> %s\n", mode.c_str(),
              result.best_clean_acc, result.best_robust_acc, result.metrics.rows.size(),
              out.c_str());
  return kExitOk;
}

int cmd_eval(ExperimentConfig& cfg, const std::string& out) {
  const auto d = oat::data::load_oatd(cfg.require_string("data.test"));
  const auto model = oat::nn::load_checkpoint(cfg.require_string("checkpoint"));
  const auto attacks = cfg.get_list("eval.attacks", {"PGD20", "CW20"});
  const double eps = cfg.get_double("eval.eps", 8.0 / 255.0);
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  cfg.ensure_all_consumed();

  oat::Rng rng(seed, 0xe5a1);
  const auto rep = oat::eval::evaluate(model, d, attacks, eps, rng);
  std::ofstream os(out + "/report.txt", std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + out + "/report.txt for writing");
  os << rep.to_text();
  cfg.write_resolved(out + "/config_resolved.txt");
  std::printf("%s", rep.to_text().c_str());
  return kExitOk;
}

int cmd_randtest(ExperimentConfig& cfg, const std::string& out) {
  const auto d_t = oat::data::load_oatd(cfg.require_string("data.train"));
  const bool with_oat = cfg.get_bool("with_oat", false);
  oat::data::Dataset d_o;
  if (with_oat) d_o = oat::data::load_oatd(cfg.require_string("data.ood"));
  oat::data::Dataset d_test;
  const std::string test_path = cfg.get_string("data.test", "");
  if (!test_path.empty()) d_test = oat::data::load_oatd(test_path);

  const auto spec = model_from_config(cfg, d_t);
  const auto tc = train_from_config(cfg);
  auto plan = eval_plan_from_config(cfg, test_path.empty() ? nullptr : &d_test, false);
  cfg.ensure_all_consumed();

  oat::Rng rng(tc.seed, 0x7a19);
  const auto metrics = oat::train::randomization_test(spec, d_t, d_o, tc, with_oat, plan, rng);
  metrics.save_csv(out + "/metrics.csv");
  cfg.write_resolved(out + "/config_resolved.txt");
  const double final_err = metrics.rows.empty() ? 1.0 : metrics.rows.back().train_err;
  std::printf("randomization test with_oat=%d final_train_err=%.4f -> %s\n", with_oat ? 1 : 0,
              final_err, out.c_str());
  return kExitOk;
}

int dispatch(const std::string& cmd, ExperimentConfig& cfg, const std::string& out) {
  ensure_out_dir(out);
  if (cmd == "verify") return cmd_verify(cfg, out);
  if (cmd == "gen") return cmd_gen(cfg, out);
  if (cmd == "train") return cmd_train(cfg, out);
  if (cmd == "eval") return cmd_eval(cfg, out);
  if (cmd == "randtest") return cmd_randtest(cfg, out);
  throw std::invalid_argument("unknown command: " + cmd);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OOD-augmented training toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = "out";

  for (const std::string name : {"verify", "gen", "train", "eval", "randtest"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "path to a key = value config file");
    sub->add_option("--set", sets, "override: key=value (repeatable)");
    sub->add_option("--out", out_dir, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();

  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path, sets);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  }

  try {
    return dispatch(cmd, cfg, out_dir);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::logic_error& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    std::fprintf(stderr, "error: %s\n", msg.c_str());
    const bool io = msg.find("cannot open") != std::string::npos ||
                    msg.find("write failed") != std::string::npos ||
                    msg.find("truncated") != std::string::npos ||
                    msg.find("bad magic") != std::string::npos ||
                    msg.find("file length") != std::string::npos ||
                    msg.find("output directory") != std::string::npos;
    return io ? kExitIo : kExitNumeric;
  }
}
