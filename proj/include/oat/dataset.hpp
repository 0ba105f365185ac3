// Dataset container, bit-exact file formats (CIFAR-10 binary and the native
// OATD format), synthetic image generation with a shared nuisance dictionary,
// label utilities, and confidence-based OOD pool mining.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oat/math.hpp"
#include "oat/model.hpp"
#include "oat/optim.hpp"
#include "oat/rng.hpp"

namespace oat::data {

// Label value marking an unlabeled OOD sample.
inline constexpr std::uint16_t kOodSentinel = 0xFFFF;

struct Dataset {
  std::vector<std::uint8_t> images;  // n * channels * H * W
  std::vector<std::uint16_t> labels;
  int channels = 0;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  const std::uint8_t* image(std::size_t i) const { return images.data() + i * image_size(); }

  bool is_ood(std::size_t i) const { return labels[i] == kOodSentinel; }
  // Class index; reading a sentinel label as a class is a hard error.
  int class_label(std::size_t i) const;

  void validate() const;
};

// Native format: magic "OATD", u32 count/channels/H/W/num_classes (LE), then
// per record a u16 label (0xFFFF = OOD sentinel) and raw pixel bytes.
void save_oatd(const Dataset& d, const std::string& path);
Dataset load_oatd(const std::string& path);

// CIFAR-10 binary: 3073-byte records, label byte then 3072 pixel bytes
// (R plane, G plane, B plane, row-major 32x32).
Dataset load_cifar10_binary(const std::string& path);
void save_cifar10_binary(const Dataset& d, const std::string& path);

struct SynthSpec {
  int num_classes = 4;
  int channels = 3;
  int height = 16;
  int width = 16;
  int num_nuisance = 32;       // M, >= num_classes
  double rho = 0.2;            // nuisance-class correlation, in [0, 0.5)
  double noise_std = 0.05;     // Gaussian pixel noise, normalized units
  double template_amp = 0.30;  // low-frequency class template amplitude
  double nuisance_amp = 0.10;  // high-frequency nuisance amplitude
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  std::size_t n_ood = 4000;

  void validate() const;
};

struct SynthData {
  Dataset train;
  Dataset test;
  Dataset ood;
  // The patterns behind the pixels, exposed for oracle checks. Target and OOD
  // images draw nuisance patterns from this one dictionary.
  std::vector<std::vector<double>> templates;  // num_classes x image_size
  std::vector<std::vector<double>> nuisance;   // num_nuisance x image_size
};

// Target image = class template + class-correlated nuisance + noise;
// OOD image = nuisance (correlated with a hidden label) + noise, no template.
SynthData gen_synthetic(const SynthSpec& spec, Rng& rng);

// Copy of d with i.i.d. uniform labels in [0, num_classes); images untouched.
Dataset randomize_labels(const Dataset& d, Rng& rng);

// [1/c, ..., 1/c].
ProbVector uniform_label(std::size_t c);

// Trains a (c+1)-way classifier on target plus a pool sample labeled as the
// extra class, scores the pool by confidence in that class and keeps the top
// `keep` images, sentinel-labeled.
Dataset mine_ood(const Dataset& pool, const Dataset& target, std::size_t keep,
                 const nn::TrainConfig& cfg, Rng& rng);

struct SampledBatch {
  nn::Batch x;                       // pixels normalized to [0, 1]
  std::vector<int> labels;           // empty for OOD datasets
  std::vector<std::size_t> indices;  // source rows
};

// Uniform with-replacement draw.
SampledBatch sample_batch(const Dataset& d, std::size_t size, Rng& rng);

// Whole dataset as one normalized batch (evaluation helper).
SampledBatch full_batch(const Dataset& d);

}  // namespace oat::data
