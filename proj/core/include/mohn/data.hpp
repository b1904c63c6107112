#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "mohn/rng.hpp"

namespace mohn {

// Planar channel-major storage (all of channel 0, then 1, ...), matching the
// CIFAR binary layout.  Values live in [0, 1] until normalization.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> values;

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[(c * height + y) * width + x];
  }
};

enum class Split { train, test };

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  Split split = Split::train;
  int class_count = 0;

  std::size_t size() const { return images.size(); }
};

// Balanced Gaussian blobs around random unit-vector centers, mapped
// affinely into [0, 1].  Samples are stored as 1 x dim x 1 images so they
// flow through the same pipeline as real image data.
Dataset gen_clusters(int class_count, int per_class, int dim, double spread,
                     std::uint64_t seed);

// Header "label,x0,...", one row per item, full double precision.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

// CIFAR-10 binary batches: 3073-byte records, label byte then 32x32x3
// pixels channel-planar.  Pixels are scaled to [0, 1] on load and written
// back with round(v * 255), which reproduces the original bytes exactly.
Dataset load_cifar10_file(const std::filesystem::path& file);
void write_cifar10_file(const Dataset& data, const std::filesystem::path& file);
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir);

// CIFAR-100 uses 3074-byte records (coarse then fine label); the fine label
// is kept.
std::pair<Dataset, Dataset> load_cifar100(const std::filesystem::path& dir);

enum class AugmentMode { image, vector_features };

struct AugmentPolicy {
  AugmentMode mode = AugmentMode::image;

  std::array<double, 2> crop_scale_range{0.2, 1.0};
  std::array<double, 2> crop_aspect_range{3.0 / 4.0, 4.0 / 3.0};
  double jitter_brightness = 0.4;
  double jitter_contrast = 0.4;
  double jitter_saturation = 0.4;
  double jitter_hue = 0.1;
  double jitter_prob = 0.8;
  double grayscale_prob = 0.2;
  double blur_prob = 0.5;
  std::array<double, 2> blur_sigma_range{0.1, 2.0};
  double flip_prob = 0.5;

  // 1 x dim x 1 feature vectors skip the geometric and color ops and get
  // these instead.
  double vector_noise_sigma = 0.05;
  double vector_dropout_prob = 0.1;

  // Computed from the training split, never hardcoded.  Per channel for
  // images, per coordinate for feature vectors.  Empty means "skip
  // normalization", which unit tests use to look at raw pixel output.
  std::vector<double> channel_mean;
  std::vector<double> channel_std;
};

void validate(const AugmentPolicy& policy);  // ConfigInvalid

struct AugmentTrace {
  bool jitter = false;
  bool grayscale = false;
  bool blur = false;
  bool flip = false;
};

// One stochastic view: crop, jitter, grayscale, blur, flip, clamp to [0, 1],
// then normalization.  Vector mode: Gaussian noise, clamp, coordinate
// dropout, normalization.  Draw order is fixed, so a seeded Rng makes the
// result reproducible.
Image augment_view(const Image& image, const AugmentPolicy& policy, Rng& rng,
                   AugmentTrace* trace = nullptr);

// view1 is drawn first, then view2, from the same stream.
std::pair<Image, Image> two_views(const Image& image,
                                  const AugmentPolicy& policy, Rng& rng);

// The deterministic tail of the pipeline (just normalization), used when
// embedding for evaluation.
Image normalize_only(const Image& image, const AugmentPolicy& policy);

// Mean / std per channel (image mode) or per coordinate (vector mode) over
// the whole dataset.  A degenerate std (constant input) is replaced by 1.
std::pair<std::vector<double>, std::vector<double>> compute_channel_stats(
    const Dataset& data, AugmentMode mode);

// CHW-flattened copy of the pixel values.
std::vector<double> flatten(const Image& image);

}  // namespace mohn
