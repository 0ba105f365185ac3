#include "oat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace oat::data {

namespace {

void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error(std::string("OATD: truncated ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

int Dataset::class_label(std::size_t i) const {
  if (labels[i] == kOodSentinel) {
    throw std::logic_error("Dataset: attempt to read an OOD sentinel as a class label");
  }
  return static_cast<int>(labels[i]);
}

void Dataset::validate() const {
  if (channels < 1 || height < 1 || width < 1 || num_classes < 1) {
    throw std::invalid_argument("Dataset: invalid shape or class count");
  }
  if (images.size() != labels.size() * image_size()) {
    throw std::invalid_argument("Dataset: image bytes do not match label count");
  }
  for (std::uint16_t l : labels) {
    if (l != kOodSentinel && l >= num_classes) {
      throw std::invalid_argument("Dataset: label out of range");
    }
  }
}

void save_oatd(const Dataset& d, const std::string& path) {
  d.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("OATD: cannot open " + path + " for writing");
  os.write("OATD", 4);
  write_u32le(os, static_cast<std::uint32_t>(d.size()));
  write_u32le(os, static_cast<std::uint32_t>(d.channels));
  write_u32le(os, static_cast<std::uint32_t>(d.height));
  write_u32le(os, static_cast<std::uint32_t>(d.width));
  write_u32le(os, static_cast<std::uint32_t>(d.num_classes));
  const std::size_t isz = d.image_size();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const unsigned char lb[2] = {static_cast<unsigned char>(d.labels[i]),
                                 static_cast<unsigned char>(d.labels[i] >> 8)};
    os.write(reinterpret_cast<const char*>(lb), 2);
    os.write(reinterpret_cast<const char*>(d.image(i)), static_cast<std::streamsize>(isz));
  }
  if (!os) throw std::runtime_error("OATD: write failed for " + path);
}

Dataset load_oatd(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("OATD: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "OATD", 4) != 0) {
    throw std::runtime_error("OATD: bad magic in " + path);
  }
  Dataset d;
  const std::uint32_t count = read_u32le(is, "count");
  d.channels = static_cast<int>(read_u32le(is, "channels"));
  d.height = static_cast<int>(read_u32le(is, "height"));
  d.width = static_cast<int>(read_u32le(is, "width"));
  d.num_classes = static_cast<int>(read_u32le(is, "num_classes"));
  if (d.channels < 1 || d.height < 1 || d.width < 1 || d.num_classes < 1) {
    throw std::runtime_error("OATD: invalid header in " + path);
  }
  d.labels.resize(count);
  d.images.resize(count * d.image_size());
  const std::size_t isz = d.image_size();
  for (std::uint32_t i = 0; i < count; ++i) {
    unsigned char lb[2];
    if (!is.read(reinterpret_cast<char*>(lb), 2)) {
      throw std::runtime_error("OATD: truncated record in " + path);
    }
    d.labels[i] = static_cast<std::uint16_t>(lb[0] | (lb[1] << 8));
    if (!is.read(reinterpret_cast<char*>(d.images.data() + i * isz),
                 static_cast<std::streamsize>(isz))) {
      throw std::runtime_error("OATD: truncated record in " + path);
    }
  }
  d.name = path;
  d.validate();
  return d;
}

Dataset load_cifar10_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("cifar10: cannot open " + path);
  const std::streamoff sz = is.tellg();
  constexpr std::streamoff kRecord = 3073;
  if (sz % kRecord != 0) {
    throw std::runtime_error("cifar10: file length is not a multiple of 3073 in " + path);
  }
  const std::size_t count = static_cast<std::size_t>(sz / kRecord);
  is.seekg(0);
  Dataset d;
  d.channels = 3;
  d.height = 32;
  d.width = 32;
  d.num_classes = 10;
  d.name = path;
  d.labels.resize(count);
  d.images.resize(count * 3072);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned char label;
    if (!is.read(reinterpret_cast<char*>(&label), 1)) {
      throw std::runtime_error("cifar10: truncated record in " + path);
    }
    if (label > 9) {
      throw std::runtime_error("cifar10: label byte > 9 in " + path);
    }
    d.labels[i] = label;
    if (!is.read(reinterpret_cast<char*>(d.images.data() + i * 3072), 3072)) {
      throw std::runtime_error("cifar10: truncated record in " + path);
    }
  }
  return d;
}

void save_cifar10_binary(const Dataset& d, const std::string& path) {
  if (d.channels != 3 || d.height != 32 || d.width != 32 || d.num_classes != 10) {
    throw std::invalid_argument("cifar10: dataset shape must be 3x32x32 with 10 classes");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cifar10: cannot open " + path + " for writing");
  for (std::size_t i = 0; i < d.size(); ++i) {
    const unsigned char label = static_cast<unsigned char>(d.class_label(i));
    os.write(reinterpret_cast<const char*>(&label), 1);
    os.write(reinterpret_cast<const char*>(d.image(i)), 3072);
  }
  if (!os) throw std::runtime_error("cifar10: write failed for " + path);
}

void SynthSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("SynthSpec: num_classes must be >= 2");
  if (channels < 1 || height < 2 || width < 2) {
    throw std::invalid_argument("SynthSpec: invalid image shape");
  }
  if (num_nuisance < num_classes) {
    throw std::invalid_argument("SynthSpec: need at least one nuisance pattern per class");
  }
  if (!(rho >= 0.0 && rho < 0.5)) throw std::invalid_argument("SynthSpec: rho must be in [0, 0.5)");
  if (noise_std < 0.0) throw std::invalid_argument("SynthSpec: noise_std must be >= 0");
  if (n_train == 0 || n_test == 0) throw std::invalid_argument("SynthSpec: empty split");
}

namespace {

// Low-frequency class template: a broad color blob at a class-specific spot.
std::vector<double> make_template(const SynthSpec& spec, int cls, Rng& rng) {
  const int H = spec.height, W = spec.width, C = spec.channels;
  std::vector<double> t(static_cast<std::size_t>(C) * H * W, 0.0);
  const double angle = 2.0 * 3.14159265358979323846 * cls / spec.num_classes;
  const double cy = H / 2.0 + (H / 4.0) * std::sin(angle);
  const double cx = W / 2.0 + (W / 4.0) * std::cos(angle);
  const double s2 = 2.0 * (H / 3.0) * (W / 3.0);
  std::vector<double> col(C);
  for (int ch = 0; ch < C; ++ch) {
    col[ch] = 0.25 + 0.75 * (((cls >> (ch % 3)) & 1) ? 1.0 : rng.uniform(0.0, 0.3));
  }
  for (int ch = 0; ch < C; ++ch) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        t[(static_cast<std::size_t>(ch) * H + y) * W + x] =
            spec.template_amp * col[ch] * std::exp(-d2 / s2);
      }
    }
  }
  return t;
}

// High-frequency nuisance: stripes or checkerboard with period 1-2 pixels.
std::vector<double> make_nuisance(const SynthSpec& spec, Rng& rng) {
  const int H = spec.height, W = spec.width, C = spec.channels;
  std::vector<double> p(static_cast<std::size_t>(C) * H * W, 0.0);
  const int kind = static_cast<int>(rng.uniform_index(4));  // h / v / checker / diagonal
  const int period = 1 + static_cast<int>(rng.uniform_index(2));
  const int phase = static_cast<int>(rng.uniform_index(2 * period));
  std::vector<double> col(C);
  for (int ch = 0; ch < C; ++ch) col[ch] = rng.uniform(0.5, 1.0);
  for (int ch = 0; ch < C; ++ch) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        int v = 0;
        switch (kind) {
          case 0: v = (y + phase) / period; break;
          case 1: v = (x + phase) / period; break;
          case 2: v = (y + phase) / period + (x + phase) / period; break;
          default: v = (y + x + phase) / period; break;
        }
        const double sgn = (v % 2 == 0) ? 1.0 : -1.0;
        p[(static_cast<std::size_t>(ch) * H + y) * W + x] = spec.nuisance_amp * col[ch] * sgn;
      }
    }
  }
  return p;
}

std::size_t draw_nuisance_index(const SynthSpec& spec, int cls, Rng& rng) {
  if (rng.next_double() < spec.rho) {
    // Pattern m has class affinity m % num_classes.
    const std::size_t per_class =
        (spec.num_nuisance + spec.num_classes - 1 - cls) / spec.num_classes;
    const std::size_t j = rng.uniform_index(per_class);
    return j * spec.num_classes + cls;
  }
  return rng.uniform_index(static_cast<std::size_t>(spec.num_nuisance));
}

}  // namespace

SynthData gen_synthetic(const SynthSpec& spec, Rng& rng) {
  spec.validate();
  SynthData out;

  Rng dict_rng = rng.derive({0x64696374});  // dictionary stream
  out.templates.reserve(spec.num_classes);
  for (int k = 0; k < spec.num_classes; ++k) {
    out.templates.push_back(make_template(spec, k, dict_rng));
  }
  out.nuisance.reserve(spec.num_nuisance);
  for (int m = 0; m < spec.num_nuisance; ++m) {
    out.nuisance.push_back(make_nuisance(spec, dict_rng));
  }

  // Nuisance patterns carry no template component: project each one against
  // the constant and the template span, so an OOD image correlates with a
  // class template only through pixel noise and quantization.
  {
    const std::size_t isz = out.templates.empty() ? 0 : out.templates[0].size();
    std::vector<std::vector<double>> basis;
    basis.emplace_back(isz, 1.0);
    for (const auto& t : out.templates) basis.push_back(t);
    for (auto& b : basis) {
      for (const auto& prev : basis) {
        if (&prev == &b) break;
        double dot = 0.0;
        for (std::size_t j = 0; j < isz; ++j) dot += prev[j] * b[j];
        for (std::size_t j = 0; j < isz; ++j) b[j] -= dot * prev[j];
      }
      double norm = 0.0;
      for (double v : b) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 1e-12) {
        for (auto& v : b) v /= norm;
      } else {
        std::fill(b.begin(), b.end(), 0.0);
      }
    }
    for (auto& p : out.nuisance) {
      double rms_before = 0.0;
      for (double v : p) rms_before += v * v;
      for (const auto& b : basis) {
        double dot = 0.0;
        for (std::size_t j = 0; j < isz; ++j) dot += b[j] * p[j];
        for (std::size_t j = 0; j < isz; ++j) p[j] -= dot * b[j];
      }
      double rms_after = 0.0;
      for (double v : p) rms_after += v * v;
      if (rms_after > 1e-24) {
        const double scale = std::sqrt(rms_before / rms_after);
        for (auto& v : p) v *= scale;
      }
    }
  }

  const std::size_t isz =
      static_cast<std::size_t>(spec.channels) * spec.height * spec.width;

  const auto init = [&](Dataset& d, std::size_t n, const char* name) {
    d.channels = spec.channels;
    d.height = spec.height;
    d.width = spec.width;
    d.num_classes = spec.num_classes;
    d.name = name;
    d.labels.resize(n);
    d.images.resize(n * isz);
  };
  init(out.train, spec.n_train, "synth-train");
  init(out.test, spec.n_test, "synth-test");
  init(out.ood, spec.n_ood, "synth-ood");

  std::vector<double> buf(isz);
  const auto render_target = [&](Dataset& d, std::size_t i, Rng& r) {
    const int cls = static_cast<int>(r.uniform_index(spec.num_classes));
    d.labels[i] = static_cast<std::uint16_t>(cls);
    const auto& tmpl = out.templates[cls];
    const auto& nui = out.nuisance[draw_nuisance_index(spec, cls, r)];
    for (std::size_t j = 0; j < isz; ++j) {
      buf[j] = 0.5 + tmpl[j] + nui[j] + (spec.noise_std > 0.0 ? r.normal(0.0, spec.noise_std) : 0.0);
    }
    std::uint8_t* img = d.images.data() + i * isz;
    for (std::size_t j = 0; j < isz; ++j) img[j] = quantize(buf[j]);
  };

  Rng train_rng = rng.derive({0x7472});
  for (std::size_t i = 0; i < spec.n_train; ++i) render_target(out.train, i, train_rng);
  Rng test_rng = rng.derive({0x7465});
  for (std::size_t i = 0; i < spec.n_test; ++i) render_target(out.test, i, test_rng);

  Rng ood_rng = rng.derive({0x6f6f});
  for (std::size_t i = 0; i < spec.n_ood; ++i) {
    const int q = static_cast<int>(ood_rng.uniform_index(spec.num_classes));  // hidden
    out.ood.labels[i] = kOodSentinel;
    const auto& nui = out.nuisance[draw_nuisance_index(spec, q, ood_rng)];
    for (std::size_t j = 0; j < isz; ++j) {
      buf[j] = 0.5 + nui[j] + (spec.noise_std > 0.0 ? ood_rng.normal(0.0, spec.noise_std) : 0.0);
    }
    std::uint8_t* img = out.ood.images.data() + i * isz;
    for (std::size_t j = 0; j < isz; ++j) img[j] = quantize(buf[j]);
  }
  return out;
}

Dataset randomize_labels(const Dataset& d, Rng& rng) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.is_ood(i)) throw std::invalid_argument("randomize_labels: dataset must be labeled");
  }
  Dataset out = d;
  out.name = d.name + "-randlabels";
  for (auto& l : out.labels) {
    l = static_cast<std::uint16_t>(rng.uniform_index(static_cast<std::uint64_t>(d.num_classes)));
  }
  return out;
}

ProbVector uniform_label(std::size_t c) { return ProbVector::uniform(c); }

Dataset mine_ood(const Dataset& pool, const Dataset& target, std::size_t keep,
                 const nn::TrainConfig& cfg, Rng& rng) {
  if (keep > pool.size()) throw std::invalid_argument("mine_ood: keep exceeds pool size");
  if (pool.image_size() != target.image_size()) {
    throw std::invalid_argument("mine_ood: pool and target shapes differ");
  }
  cfg.validate();
  const int c = target.num_classes;

  // (c+1)-way training set: target with its labels, pool sample as class c.
  Rng sample_rng = rng.derive({0x706f6f6c});
  const std::size_t n_pool_train = std::min(pool.size(), target.size());
  std::vector<std::size_t> pool_pick(n_pool_train);
  for (auto& p : pool_pick) p = sample_rng.uniform_index(pool.size());

  nn::ModelSpec spec;
  spec.kind = nn::ModelKind::mlp;
  spec.channels = target.channels;
  spec.height = target.height;
  spec.width = target.width;
  spec.hidden = {64};
  spec.num_classes = c + 1;
  Rng init_rng = rng.derive({0x696e6974});
  nn::Model model = nn::build_model(spec, init_rng);

  nn::SgdState sgd;
  Rng batch_rng = rng.derive({0x62617463});
  const std::size_t total = target.size() + n_pool_train;
  const double inv255 = 1.0 / 255.0;
  const std::size_t isz = target.image_size();
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    nn::Batch b;
    b.n = static_cast<int>(cfg.batch_size);
    b.x.resize(cfg.batch_size * isz);
    std::vector<int> y(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      const std::size_t pick = batch_rng.uniform_index(total);
      const std::uint8_t* img;
      if (pick < target.size()) {
        img = target.image(pick);
        y[i] = target.class_label(pick);
      } else {
        img = pool.image(pool_pick[pick - target.size()]);
        y[i] = c;
      }
      for (std::size_t j = 0; j < isz; ++j) b.x[i * isz + j] = img[j] * inv255;
    }
    const auto res = nn::loss_and_grads(model, b, nn::Targets::from_hard(y),
                                        nn::LossKind{nn::LossKind::ce_hard, 0.0}, {true, false});
    nn::sgd_step(model, res.param_grads, nn::lr_at(step, cfg), cfg, sgd);
  }

  // Score the whole pool by confidence in the extra class.
  std::vector<double> score(pool.size());
  const std::size_t chunk = 256;
  for (std::size_t base = 0; base < pool.size(); base += chunk) {
    const std::size_t e = std::min(pool.size(), base + chunk);
    nn::Batch b;
    b.n = static_cast<int>(e - base);
    b.x.resize((e - base) * isz);
    for (std::size_t i = base; i < e; ++i) {
      const std::uint8_t* img = pool.image(i);
      for (std::size_t j = 0; j < isz; ++j) b.x[(i - base) * isz + j] = img[j] * inv255;
    }
    const auto logits = nn::forward(model, b);
    for (std::size_t i = base; i < e; ++i) {
      const auto probs = softmax_stable(
          std::span<const double>(logits.data() + (i - base) * (c + 1), c + 1));
      score[i] = probs[c];
    }
  }

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b2) {
    if (score[a] != score[b2]) return score[a] > score[b2];
    return a < b2;
  });

  Dataset out;
  out.channels = pool.channels;
  out.height = pool.height;
  out.width = pool.width;
  out.num_classes = c;
  out.name = pool.name + "-mined";
  out.labels.assign(keep, kOodSentinel);
  out.images.resize(keep * isz);
  for (std::size_t i = 0; i < keep; ++i) {
    std::memcpy(out.images.data() + i * isz, pool.image(order[i]), isz);
  }
  return out;
}

SampledBatch sample_batch(const Dataset& d, std::size_t size, Rng& rng) {
  if (d.size() == 0) throw std::invalid_argument("sample_batch: empty dataset");
  if (size < 1) throw std::invalid_argument("sample_batch: size must be >= 1");
  SampledBatch out;
  out.x.n = static_cast<int>(size);
  const std::size_t isz = d.image_size();
  out.x.x.resize(size * isz);
  out.indices.resize(size);
  const bool labeled = std::none_of(d.labels.begin(), d.labels.end(),
                                    [](std::uint16_t l) { return l == kOodSentinel; });
  if (labeled) out.labels.resize(size);
  const double inv255 = 1.0 / 255.0;
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t pick = rng.uniform_index(d.size());
    out.indices[i] = pick;
    const std::uint8_t* img = d.image(pick);
    for (std::size_t j = 0; j < isz; ++j) out.x.x[i * isz + j] = img[j] * inv255;
    if (labeled) out.labels[i] = d.class_label(pick);
  }
  return out;
}

SampledBatch full_batch(const Dataset& d) {
  if (d.size() == 0) throw std::invalid_argument("full_batch: empty dataset");
  SampledBatch out;
  out.x.n = static_cast<int>(d.size());
  const std::size_t isz = d.image_size();
  out.x.x.resize(d.size() * isz);
  out.indices.resize(d.size());
  const bool labeled = std::none_of(d.labels.begin(), d.labels.end(),
                                    [](std::uint16_t l) { return l == kOodSentinel; });
  if (labeled) out.labels.resize(d.size());
  const double inv255 = 1.0 / 255.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    out.indices[i] = i;
    const std::uint8_t* img = d.image(i);
    for (std::size_t j = 0; j < isz; ++j) out.x.x[i * isz + j] = img[j] * inv255;
    if (labeled) out.labels[i] = d.class_label(i);
  }
  return out;
}

}  // namespace oat::data
