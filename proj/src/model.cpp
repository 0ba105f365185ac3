#include "oat/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "oat/math.hpp"
#include "oat/parallel.hpp"

namespace oat {

void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t chunks = std::min(kFixedChunks, n);
  const std::size_t per = (n + chunks - 1) / chunks;
  if (chunks == 1 || std::thread::hardware_concurrency() <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      fn(c, c * per, std::min(n, (c + 1) * per));
    }
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    workers.emplace_back([&, c] { fn(c, c * per, std::min(n, (c + 1) * per)); });
  }
  for (auto& w : workers) w.join();
}

}  // namespace oat

namespace oat::nn {

std::string kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::logistic: return "logistic";
    case ModelKind::mlp: return "mlp";
    case ModelKind::cnn_small: return "cnn-small";
  }
  return "?";
}

ModelKind kind_from_name(const std::string& name) {
  if (name == "logistic") return ModelKind::logistic;
  if (name == "mlp") return ModelKind::mlp;
  if (name == "cnn-small" || name == "cnn_small") return ModelKind::cnn_small;
  throw std::invalid_argument("unknown model kind: " + name);
}

void ModelSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("ModelSpec: num_classes must be >= 2");
  if (channels < 1 || height < 1 || width < 1) {
    throw std::invalid_argument("ModelSpec: invalid input shape");
  }
  if (kind == ModelKind::mlp) {
    for (int h : hidden) {
      if (h < 1) throw std::invalid_argument("ModelSpec: mlp hidden widths must be >= 1");
    }
  }
  if (kind == ModelKind::cnn_small) {
    if (!hidden.empty() && hidden.size() != 4) {
      throw std::invalid_argument(
          "ModelSpec: cnn-small hidden must be {conv1, conv2, kernel, fc} or empty");
    }
    const int k = hidden.empty() ? 3 : hidden[2];
    if (k < 1 || k % 2 == 0) {
      throw std::invalid_argument("ModelSpec: cnn-small kernel must be odd");
    }
    if (height % 4 != 0 || width % 4 != 0) {
      throw std::invalid_argument("ModelSpec: cnn-small needs H, W divisible by 4");
    }
  }
}

std::string LossKind::name() const {
  switch (tag) {
    case ce_hard: return "ce-hard";
    case ce_soft: return "ce-soft";
    case kl: return "kl";
    case cw_margin: return "cw-margin";
  }
  return "?";
}

LossKind LossKind::from_name(const std::string& name, double kappa) {
  LossKind k;
  k.kappa = kappa;
  if (name == "ce-hard") k.tag = ce_hard;
  else if (name == "ce-soft") k.tag = ce_soft;
  else if (name == "kl") k.tag = kl;
  else if (name == "cw-margin") k.tag = cw_margin;
  else throw std::invalid_argument("unknown loss kind: " + name);
  return k;
}

Targets Targets::from_hard(std::vector<int> labels) {
  Targets t;
  t.hard = std::move(labels);
  if (t.hard.empty()) throw std::invalid_argument("Targets: empty");
  return t;
}

Targets Targets::from_soft(std::vector<std::vector<double>> probs) {
  Targets t;
  t.soft = std::move(probs);
  if (t.soft.empty()) throw std::invalid_argument("Targets: empty");
  return t;
}

std::vector<LayerDesc> plan_layers(const ModelSpec& spec, std::size_t* param_count) {
  spec.validate();
  std::vector<LayerDesc> layers;
  std::size_t off = 0;

  const auto add_fc = [&](int in, int out) {
    LayerDesc l;
    l.type = LayerDesc::Fc;
    l.in_c = in; l.in_h = 1; l.in_w = 1;
    l.out_c = out; l.out_h = 1; l.out_w = 1;
    l.w_off = off;
    off += static_cast<std::size_t>(in) * out;
    l.b_off = off;
    off += out;
    layers.push_back(l);
  };
  const auto add_relu = [&](int c, int h, int w) {
    LayerDesc l;
    l.type = LayerDesc::Relu;
    l.in_c = c; l.in_h = h; l.in_w = w;
    l.out_c = c; l.out_h = h; l.out_w = w;
    layers.push_back(l);
  };
  const auto add_conv = [&](int in_c, int h, int w, int out_c, int k) {
    LayerDesc l;
    l.type = LayerDesc::Conv;
    l.in_c = in_c; l.in_h = h; l.in_w = w;
    l.out_c = out_c; l.out_h = h; l.out_w = w;  // stride 1, same padding
    l.kernel = k;
    l.w_off = off;
    off += static_cast<std::size_t>(out_c) * in_c * k * k;
    l.b_off = off;
    off += out_c;
    layers.push_back(l);
  };
  const auto add_pool = [&](int c, int h, int w) {
    LayerDesc l;
    l.type = LayerDesc::Pool;
    l.in_c = c; l.in_h = h; l.in_w = w;
    l.out_c = c; l.out_h = h / 2; l.out_w = w / 2;
    layers.push_back(l);
  };

  switch (spec.kind) {
    case ModelKind::logistic:
      add_fc(spec.input_size(), spec.num_classes);
      break;
    case ModelKind::mlp: {
      int in = spec.input_size();
      for (int h : spec.hidden) {
        add_fc(in, h);
        add_relu(h, 1, 1);
        in = h;
      }
      add_fc(in, spec.num_classes);
      break;
    }
    case ModelKind::cnn_small: {
      const std::vector<int> hp = spec.hidden.empty() ? std::vector<int>{16, 32, 3, 128}
                                                      : spec.hidden;
      const int f1 = hp[0], f2 = hp[1], k = hp[2], fcw = hp[3];
      int h = spec.height, w = spec.width;
      add_conv(spec.channels, h, w, f1, k);
      add_relu(f1, h, w);
      add_pool(f1, h, w);
      h /= 2; w /= 2;
      add_conv(f1, h, w, f2, k);
      add_relu(f2, h, w);
      add_pool(f2, h, w);
      h /= 2; w /= 2;
      add_fc(f2 * h * w, fcw);
      add_relu(fcw, 1, 1);
      add_fc(fcw, spec.num_classes);
      break;
    }
  }
  if (param_count) *param_count = off;
  return layers;
}

Model build_model(const ModelSpec& spec, Rng& rng) {
  Model m;
  m.spec = spec;
  std::size_t count = 0;
  m.layers = plan_layers(spec, &count);
  m.params.assign(count, 0.0);
  for (const auto& l : m.layers) {
    if (l.type != LayerDesc::Fc && l.type != LayerDesc::Conv) continue;
    const std::size_t fan_in = l.type == LayerDesc::Fc
                                   ? static_cast<std::size_t>(l.in_size())
                                   : static_cast<std::size_t>(l.in_c) * l.kernel * l.kernel;
    const std::size_t n_w = l.b_off - l.w_off;
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < n_w; ++i) m.params[l.w_off + i] = scale * rng.normal();
    // biases stay zero
  }
  return m;
}

namespace {

// Forward one sample through the pipeline. acts[0] is the input; acts[i+1]
// the output of layer i.
void forward_sample(const Model& m, const double* x, std::vector<std::vector<double>>& acts) {
  const auto& layers = m.layers;
  acts.resize(layers.size() + 1);
  acts[0].assign(x, x + m.spec.input_size());
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& l = layers[li];
    const auto& in = acts[li];
    auto& out = acts[li + 1];
    out.resize(static_cast<std::size_t>(l.out_size()));  // every case overwrites fully
    switch (l.type) {
      case LayerDesc::Fc: {
        const double* W = m.params.data() + l.w_off;
        const double* b = m.params.data() + l.b_off;
        const int ni = l.in_size(), no = l.out_size();
        for (int o = 0; o < no; ++o) {
          double acc = b[o];
          const double* wrow = W + static_cast<std::size_t>(o) * ni;
          for (int i = 0; i < ni; ++i) acc += wrow[i] * in[i];
          out[o] = acc;
        }
        break;
      }
      case LayerDesc::Conv: {
        // Shifted-row accumulation: for each kernel offset the valid region is
        // a rectangle, so the inner loop is a contiguous multiply-add.
        const double* W = m.params.data() + l.w_off;
        const double* b = m.params.data() + l.b_off;
        const int k = l.kernel, pad = l.kernel / 2;
        const int H = l.in_h, Wd = l.in_w;
        for (int oc = 0; oc < l.out_c; ++oc) {
          double* och = out.data() + static_cast<std::size_t>(oc) * H * Wd;
          for (int i = 0; i < H * Wd; ++i) och[i] = b[oc];
          const double* wbase = W + static_cast<std::size_t>(oc) * l.in_c * k * k;
          for (int ic = 0; ic < l.in_c; ++ic) {
            const double* wch = wbase + static_cast<std::size_t>(ic) * k * k;
            const double* ich = in.data() + static_cast<std::size_t>(ic) * H * Wd;
            for (int ky = 0; ky < k; ++ky) {
              const int dy = ky - pad;
              const int ylo = std::max(0, -dy), yhi = std::min(H, H - dy);
              for (int kx = 0; kx < k; ++kx) {
                const int dx = kx - pad;
                const int xlo = std::max(0, -dx), xhi = std::min(Wd, Wd - dx);
                const double wv = wch[ky * k + kx];
                if (wv == 0.0 || xlo >= xhi) continue;
                for (int y = ylo; y < yhi; ++y) {
                  double* orow = och + y * Wd + xlo;
                  const double* irow = ich + (y + dy) * Wd + xlo + dx;
                  for (int i = 0; i < xhi - xlo; ++i) orow[i] += wv * irow[i];
                }
              }
            }
          }
        }
        break;
      }
      case LayerDesc::Relu:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
        break;
      case LayerDesc::Pool: {
        const int H = l.in_h, Wd = l.in_w, oh = l.out_h, ow = l.out_w;
        for (int c = 0; c < l.in_c; ++c) {
          const double* ich = in.data() + static_cast<std::size_t>(c) * H * Wd;
          double* och = out.data() + static_cast<std::size_t>(c) * oh * ow;
          for (int y = 0; y < oh; ++y) {
            for (int x2 = 0; x2 < ow; ++x2) {
              const int iy = 2 * y, ix = 2 * x2;
              och[y * ow + x2] = 0.25 * (ich[iy * Wd + ix] + ich[iy * Wd + ix + 1] +
                                         ich[(iy + 1) * Wd + ix] + ich[(iy + 1) * Wd + ix + 1]);
            }
          }
        }
        break;
      }
    }
  }
}

// Backward one sample: dlogits seeds the top; fills dinput (if non-null) and
// accumulates into pgrads (if non-null).
void backward_sample(const Model& m, const std::vector<std::vector<double>>& acts,
                     std::vector<double>& dout, std::vector<double>& din, double* dinput,
                     double* pgrads) {
  const auto& layers = m.layers;
  for (std::size_t lip = layers.size(); lip-- > 0;) {
    const auto& l = layers[lip];
    const auto& in = acts[lip];
    din.assign(static_cast<std::size_t>(l.in_size()), 0.0);
    switch (l.type) {
      case LayerDesc::Fc: {
        const double* W = m.params.data() + l.w_off;
        const int ni = l.in_size(), no = l.out_size();
        for (int o = 0; o < no; ++o) {
          const double go = dout[o];
          if (go == 0.0) continue;
          const double* wrow = W + static_cast<std::size_t>(o) * ni;
          for (int i = 0; i < ni; ++i) din[i] += wrow[i] * go;
        }
        if (pgrads) {
          double* gW = pgrads + l.w_off;
          double* gb = pgrads + l.b_off;
          for (int o = 0; o < no; ++o) {
            const double go = dout[o];
            gb[o] += go;
            if (go == 0.0) continue;
            double* grow = gW + static_cast<std::size_t>(o) * ni;
            for (int i = 0; i < ni; ++i) grow[i] += go * in[i];
          }
        }
        break;
      }
      case LayerDesc::Conv: {
        const double* W = m.params.data() + l.w_off;
        const int k = l.kernel, pad = l.kernel / 2;
        const int H = l.in_h, Wd = l.in_w;
        for (int oc = 0; oc < l.out_c; ++oc) {
          const double* wbase = W + static_cast<std::size_t>(oc) * l.in_c * k * k;
          double* gwbase = pgrads ? pgrads + l.w_off + static_cast<std::size_t>(oc) * l.in_c * k * k
                                  : nullptr;
          const double* dch = dout.data() + static_cast<std::size_t>(oc) * H * Wd;
          if (pgrads) {
            double gb = 0.0;
            for (int i = 0; i < H * Wd; ++i) gb += dch[i];
            pgrads[l.b_off + oc] += gb;
          }
          for (int ic = 0; ic < l.in_c; ++ic) {
            const double* wch = wbase + static_cast<std::size_t>(ic) * k * k;
            const double* ich = in.data() + static_cast<std::size_t>(ic) * H * Wd;
            double* dich = din.data() + static_cast<std::size_t>(ic) * H * Wd;
            double* gwch = gwbase ? gwbase + static_cast<std::size_t>(ic) * k * k : nullptr;
            for (int ky = 0; ky < k; ++ky) {
              const int dy = ky - pad;
              const int ylo = std::max(0, -dy), yhi = std::min(H, H - dy);
              for (int kx = 0; kx < k; ++kx) {
                const int dx = kx - pad;
                const int xlo = std::max(0, -dx), xhi = std::min(Wd, Wd - dx);
                if (xlo >= xhi) continue;
                const double wv = wch[ky * k + kx];
                double gw = 0.0;
                for (int y = ylo; y < yhi; ++y) {
                  const double* drow = dch + y * Wd + xlo;
                  const double* irow = ich + (y + dy) * Wd + xlo + dx;
                  double* dirow = dich + (y + dy) * Wd + xlo + dx;
                  const int len = xhi - xlo;
                  if (wv != 0.0) {
                    for (int i = 0; i < len; ++i) dirow[i] += wv * drow[i];
                  }
                  if (gwch) {
                    double acc = 0.0;
                    for (int i = 0; i < len; ++i) acc += irow[i] * drow[i];
                    gw += acc;
                  }
                }
                if (gwch) gwch[ky * k + kx] += gw;
              }
            }
          }
        }
        break;
      }
      case LayerDesc::Relu:
        for (std::size_t i = 0; i < din.size(); ++i) din[i] = in[i] > 0.0 ? dout[i] : 0.0;
        break;
      case LayerDesc::Pool: {
        const int H = l.in_h, Wd = l.in_w, oh = l.out_h, ow = l.out_w;
        for (int c = 0; c < l.in_c; ++c) {
          const double* dch = dout.data() + static_cast<std::size_t>(c) * oh * ow;
          double* dich = din.data() + static_cast<std::size_t>(c) * H * Wd;
          for (int y = 0; y < oh; ++y) {
            for (int x2 = 0; x2 < ow; ++x2) {
              const double g = 0.25 * dch[y * ow + x2];
              const int iy = 2 * y, ix = 2 * x2;
              dich[iy * Wd + ix] += g;
              dich[iy * Wd + ix + 1] += g;
              dich[(iy + 1) * Wd + ix] += g;
              dich[(iy + 1) * Wd + ix + 1] += g;
            }
          }
        }
        break;
      }
    }
    std::swap(dout, din);
  }
  if (dinput) {
    std::memcpy(dinput, dout.data(), dout.size() * sizeof(double));
  }
}

// Per-sample loss and logit gradient.
double loss_at_logits(const LossKind& kind, std::span<const double> logits,
                      const Targets& targets, std::size_t i, std::vector<double>& dlogits) {
  const std::size_t c = logits.size();
  dlogits.assign(c, 0.0);
  switch (kind.tag) {
    case LossKind::ce_hard: {
      const int y = targets.hard[i];
      if (y < 0 || static_cast<std::size_t>(y) >= c) {
        throw std::invalid_argument("loss_and_grads: class index out of range");
      }
      const auto ls = log_softmax_stable(logits);
      for (std::size_t j = 0; j < c; ++j) dlogits[j] = std::exp(ls[j]);
      dlogits[static_cast<std::size_t>(y)] -= 1.0;
      return -ls[static_cast<std::size_t>(y)];
    }
    case LossKind::ce_soft: {
      const auto& t = targets.soft[i];
      if (t.size() != c) throw std::invalid_argument("loss_and_grads: soft target size mismatch");
      const auto ls = log_softmax_stable(logits);
      double loss = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        dlogits[j] = std::exp(ls[j]) - t[j];
        loss -= t[j] * ls[j];
      }
      return loss;
    }
    case LossKind::kl: {
      const auto& r = targets.soft[i];
      if (r.size() != c) throw std::invalid_argument("loss_and_grads: kl reference size mismatch");
      const auto ls = log_softmax_stable(logits);
      double loss = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        dlogits[j] = std::exp(ls[j]) - r[j];
        if (r[j] > 0.0) loss += r[j] * (std::log(r[j]) - ls[j]);
      }
      return std::max(loss, 0.0);
    }
    case LossKind::cw_margin: {
      const int y = targets.hard[i];
      if (y < 0 || static_cast<std::size_t>(y) >= c) {
        throw std::invalid_argument("loss_and_grads: class index out of range");
      }
      std::size_t best = (y == 0) ? 1 : 0;
      for (std::size_t j = 0; j < c; ++j) {
        if (j == static_cast<std::size_t>(y)) continue;
        if (logits[j] > logits[best]) best = j;
      }
      const double margin = logits[best] - logits[static_cast<std::size_t>(y)];
      if (margin > -kind.kappa) {
        dlogits[best] = 1.0;
        dlogits[static_cast<std::size_t>(y)] = -1.0;
        return margin;
      }
      return -kind.kappa;
    }
  }
  throw std::logic_error("loss_at_logits: unreachable");
}

void check_targets(const LossKind& kind, const Targets& targets, std::size_t n) {
  const bool needs_hard = kind.tag == LossKind::ce_hard || kind.tag == LossKind::cw_margin;
  if (needs_hard && !targets.is_hard()) {
    throw std::invalid_argument("loss_and_grads: " + kind.name() + " needs class indices");
  }
  if (!needs_hard && targets.is_hard()) {
    throw std::invalid_argument("loss_and_grads: " + kind.name() + " needs probability vectors");
  }
  if (targets.size() != n) {
    throw std::invalid_argument("loss_and_grads: target count does not match batch");
  }
}

}  // namespace

std::vector<double> forward(const Model& model, const Batch& batch) {
  if (batch.n <= 0 || batch.input_size() != model.spec.input_size()) {
    throw std::invalid_argument("forward: batch shape does not match model spec");
  }
  const int c = model.spec.num_classes;
  std::vector<double> logits(static_cast<std::size_t>(batch.n) * c);
  parallel_chunks(static_cast<std::size_t>(batch.n), [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<std::vector<double>> acts;
    for (std::size_t i = b; i < e; ++i) {
      forward_sample(model, batch.x.data() + i * model.spec.input_size(), acts);
      std::copy(acts.back().begin(), acts.back().end(), logits.begin() + i * c);
    }
  });
  return logits;
}

LossResult loss_and_grads(const Model& model, const Batch& batch, const Targets& targets,
                          const LossKind& kind, const GradRequest& want) {
  if (batch.n <= 0 || batch.input_size() != model.spec.input_size()) {
    throw std::invalid_argument("loss_and_grads: batch shape does not match model spec");
  }
  const std::size_t n = static_cast<std::size_t>(batch.n);
  check_targets(kind, targets, n);

  LossResult res;
  res.per_sample.assign(n, 0.0);
  res.logits.assign(n * static_cast<std::size_t>(model.spec.num_classes), 0.0);
  if (want.inputs) res.input_grads.assign(batch.x.size(), 0.0);

  const std::size_t chunks = std::min(kFixedChunks, n);
  std::vector<std::vector<double>> chunk_pgrads;
  if (want.params) chunk_pgrads.assign(chunks, std::vector<double>(model.param_count(), 0.0));

  const double inv_n = 1.0 / static_cast<double>(n);
  parallel_chunks(n, [&](std::size_t ci, std::size_t b, std::size_t e) {
    std::vector<std::vector<double>> acts;
    std::vector<double> dlogits, dscratch;
    const std::size_t c = static_cast<std::size_t>(model.spec.num_classes);
    for (std::size_t i = b; i < e; ++i) {
      forward_sample(model, batch.x.data() + i * model.spec.input_size(), acts);
      std::copy(acts.back().begin(), acts.back().end(), res.logits.begin() + i * c);
      res.per_sample[i] =
          loss_at_logits(kind, std::span<const double>(acts.back()), targets, i, dlogits);
      if (!want.params && !want.inputs) continue;
      for (auto& g : dlogits) g *= inv_n;
      backward_sample(model, acts, dlogits, dscratch,
                      want.inputs ? res.input_grads.data() + i * model.spec.input_size() : nullptr,
                      want.params ? chunk_pgrads[ci].data() : nullptr);
    }
  });

  if (want.params) {
    res.param_grads.assign(model.param_count(), 0.0);
    for (std::size_t c = 0; c < chunks; ++c) {
      for (std::size_t j = 0; j < res.param_grads.size(); ++j) {
        res.param_grads[j] += chunk_pgrads[c][j];
      }
    }
  }

  double total = 0.0;
  for (double l : res.per_sample) total += l;
  res.loss = total * inv_n;
  if (!std::isfinite(res.loss)) {
    throw std::runtime_error("loss_and_grads: non-finite loss");
  }
  return res;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("checkpoint: truncated file");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write("OATM", 4);
  write_u32(os, 1);  // version
  write_u32(os, static_cast<std::uint32_t>(model.spec.kind));
  write_u32(os, static_cast<std::uint32_t>(model.spec.channels));
  write_u32(os, static_cast<std::uint32_t>(model.spec.height));
  write_u32(os, static_cast<std::uint32_t>(model.spec.width));
  write_u32(os, static_cast<std::uint32_t>(model.spec.num_classes));
  write_u32(os, static_cast<std::uint32_t>(model.spec.hidden.size()));
  for (int h : model.spec.hidden) write_u32(os, static_cast<std::uint32_t>(h));
  write_u32(os, static_cast<std::uint32_t>(model.params.size()));
  for (double p : model.params) write_f64(os, p);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "OATM", 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(is);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  ModelSpec spec;
  spec.kind = static_cast<ModelKind>(read_u32(is));
  spec.channels = static_cast<int>(read_u32(is));
  spec.height = static_cast<int>(read_u32(is));
  spec.width = static_cast<int>(read_u32(is));
  spec.num_classes = static_cast<int>(read_u32(is));
  const std::uint32_t nh = read_u32(is);
  spec.hidden.resize(nh);
  for (auto& h : spec.hidden) h = static_cast<int>(read_u32(is));
  const std::uint32_t np = read_u32(is);

  Model m;
  m.spec = spec;
  std::size_t expect = 0;
  m.layers = plan_layers(spec, &expect);
  if (expect != np) throw std::runtime_error("checkpoint: parameter count mismatch");
  m.params.resize(np);
  for (auto& p : m.params) p = read_f64(is);
  return m;
}

}  // namespace oat::nn
