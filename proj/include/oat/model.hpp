// Compact trainable networks (logistic / MLP / small CNN) with exact manual
// backpropagation for both parameter and input gradients, plus the loss
// functions used by every training objective.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oat/rng.hpp"

namespace oat::nn {

enum class ModelKind { logistic, mlp, cnn_small };

std::string kind_name(ModelKind k);
ModelKind kind_from_name(const std::string& name);

struct ModelSpec {
  ModelKind kind = ModelKind::logistic;
  int channels = 1;
  int height = 1;
  int width = 1;
  // mlp: hidden layer widths. cnn_small: {conv1 filters, conv2 filters,
  // kernel, fc width}; empty selects {16, 32, 3, 128}.
  std::vector<int> hidden;
  int num_classes = 2;

  int input_size() const { return channels * height * width; }
  void validate() const;
};

// Internal layer pipeline; exposed for tests that need per-layer shapes.
struct LayerDesc {
  enum Type { Fc, Conv, Relu, Pool } type = Fc;
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, out_h = 0, out_w = 0;
  int kernel = 0;
  std::size_t w_off = 0, b_off = 0;

  int in_size() const { return in_c * in_h * in_w; }
  int out_size() const { return out_c * out_h * out_w; }
};

struct Model {
  ModelSpec spec;
  std::vector<LayerDesc> layers;
  std::vector<double> params;

  std::size_t param_count() const { return params.size(); }
};

// He-scaled Gaussian weights, zero biases; deterministic given rng.
Model build_model(const ModelSpec& spec, Rng& rng);

// Layer pipeline and parameter count for a spec without drawing parameters.
std::vector<LayerDesc> plan_layers(const ModelSpec& spec, std::size_t* param_count);

struct Batch {
  std::vector<double> x;  // n * input_size, row-major
  int n = 0;

  int input_size() const { return n > 0 ? static_cast<int>(x.size()) / n : 0; }
};

struct LossKind {
  enum Tag { ce_hard, ce_soft, kl, cw_margin } tag = ce_hard;
  double kappa = 0.0;  // cw_margin confidence only

  std::string name() const;
  static LossKind from_name(const std::string& name, double kappa = 0.0);
};

// Hard class indices (ce_hard, cw_margin) or probability vectors
// (ce_soft, kl; the kl vectors are the reference distribution).
struct Targets {
  std::vector<int> hard;
  std::vector<std::vector<double>> soft;

  static Targets from_hard(std::vector<int> labels);
  static Targets from_soft(std::vector<std::vector<double>> probs);
  bool is_hard() const { return !hard.empty(); }
  std::size_t size() const { return is_hard() ? hard.size() : soft.size(); }
};

// Logits, n * num_classes row-major.
std::vector<double> forward(const Model& model, const Batch& batch);

struct LossResult {
  double loss = 0.0;                  // batch mean
  std::vector<double> per_sample;     // per-sample losses
  std::vector<double> logits;         // n * num_classes
  std::vector<double> param_grads;    // d(mean loss)/d params
  std::vector<double> input_grads;    // d(mean loss)/d inputs, n * input_size
};

struct GradRequest {
  bool params = true;
  bool inputs = true;
};

LossResult loss_and_grads(const Model& model, const Batch& batch, const Targets& targets,
                          const LossKind& kind, const GradRequest& want = {});

// Checkpoint I/O: magic "OATM", spec descriptor, parameters as little-endian
// 64-bit floats in layer order.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace oat::nn
