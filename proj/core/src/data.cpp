#include "mohn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "mohn/error.hpp"
#include "mohn/numeric.hpp"

namespace mohn {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void check_image(const Image& img) {
  if (img.height < 1 || img.width < 1)
    throw Error(ErrorKind::invalid_image, "image has empty extent");
  if (img.channels != 1 && img.channels != 3)
    throw Error(ErrorKind::invalid_image, "image must have 1 or 3 channels");
  if (img.values.size() != img.height * img.width * img.channels)
    throw Error(ErrorKind::invalid_image, "image storage does not match extent");
  for (double v : img.values)
    if (!(v >= 0.0 && v <= 1.0))
      throw Error(ErrorKind::invalid_image, "pixel values must lie in [0, 1]");
}

}  // namespace

Dataset gen_clusters(int class_count, int per_class, int dim, double spread,
                     std::uint64_t seed) {
  if (class_count < 2)
    throw Error(ErrorKind::invalid_shape, "gen_clusters: need at least 2 classes");
  if (per_class < 1)
    throw Error(ErrorKind::invalid_shape, "gen_clusters: per_class must be >= 1");
  if (dim < 2)
    throw Error(ErrorKind::invalid_shape, "gen_clusters: dim must be >= 2");
  if (!(spread > 0.0))
    throw Error(ErrorKind::invalid_shape, "gen_clusters: spread must be positive");

  Rng rng(seed);
  const auto d = static_cast<std::size_t>(dim);

  std::vector<std::vector<double>> centers(static_cast<std::size_t>(class_count));
  for (auto& center : centers) {
    center.resize(d);
    double norm = 0.0;
    do {
      for (auto& v : center) v = rng.gaussian();
      norm = l2_norm(center);
    } while (norm <= kNormEpsilon);
    for (auto& v : center) v /= norm;
  }

  Dataset data;
  data.class_count = class_count;
  data.split = Split::train;
  data.images.reserve(static_cast<std::size_t>(class_count * per_class));
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int c = 0; c < class_count; ++c) {
    for (int s = 0; s < per_class; ++s) {
      Image img;
      img.height = 1;
      img.width = d;
      img.channels = 1;
      img.values.resize(d);
      for (std::size_t i = 0; i < d; ++i) {
        img.values[i] = centers[static_cast<std::size_t>(c)][i] +
                        spread * rng.gaussian();
        lo = std::min(lo, img.values[i]);
        hi = std::max(hi, img.values[i]);
      }
      data.images.push_back(std::move(img));
      data.labels.push_back(c);
    }
  }

  // One affine map for the whole dataset, so cluster geometry survives.
  const double scale = hi - lo;
  if (!(scale > 0.0))
    throw Error(ErrorKind::invalid_shape, "gen_clusters: degenerate value range");
  for (auto& img : data.images)
    for (auto& v : img.values) v = (v - lo) / scale;
  return data;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::io_failure, "cannot open for writing: " + path.string());
  const std::size_t dim = data.images.empty() ? 0 : data.images.front().values.size();
  out << "label";
  for (std::size_t i = 0; i < dim; ++i) out << ",x" << i;
  out << "\n";
  char buf[64];
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (data.images[r].values.size() != dim)
      throw Error(ErrorKind::invalid_shape, "write_dataset_csv: ragged rows");
    out << data.labels[r];
    for (double v : data.images[r].values) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << "\n";
  }
  out.flush();
  if (!out)
    throw Error(ErrorKind::io_failure, "write failed: " + path.string());
}

namespace {

double parse_double(const std::string& token, const std::filesystem::path& path) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    throw Error(ErrorKind::invalid_shape,
                "bad numeric field '" + token + "' in " + path.string());
  return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::missing_file, "cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorKind::invalid_shape, "empty csv: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.empty() || header.front() != "label")
    throw Error(ErrorKind::invalid_shape,
                "csv header must start with 'label': " + path.string());
  const std::size_t dim = header.size() - 1;
  if (dim == 0)
    throw Error(ErrorKind::invalid_shape, "csv has no feature columns");

  Dataset data;
  data.split = Split::train;
  int max_label = -1;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != dim + 1)
      throw Error(ErrorKind::invalid_shape,
                  "csv row has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(dim + 1));
    const double label_value = parse_double(fields[0], path);
    const int label = static_cast<int>(label_value);
    if (label < 0 || static_cast<double>(label) != label_value)
      throw Error(ErrorKind::label_out_of_range,
                  "label must be a non-negative integer, got '" + fields[0] + "'");
    Image img;
    img.height = 1;
    img.width = dim;
    img.channels = 1;
    img.values.resize(dim);
    for (std::size_t i = 0; i < dim; ++i)
      img.values[i] = parse_double(fields[i + 1], path);
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  data.class_count = max_label + 1;
  return data;
}

namespace {

constexpr std::size_t kCifarPixels = 32 * 32 * 3;

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::missing_file, "cannot open: " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  if (in.bad())
    throw Error(ErrorKind::io_failure, "read failed: " + path.string());
  return bytes;
}

Dataset read_cifar_records(const std::filesystem::path& path,
                           std::size_t label_bytes, int class_count) {
  const auto bytes = read_file_bytes(path);
  const std::size_t record = label_bytes + kCifarPixels;
  if (bytes.empty() || bytes.size() % record != 0)
    throw Error(ErrorKind::truncated_record,
                path.string() + ": size " + std::to_string(bytes.size()) +
                    " is not a multiple of " + std::to_string(record));
  Dataset data;
  data.class_count = class_count;
  const std::size_t count = bytes.size() / record;
  data.images.reserve(count);
  data.labels.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    const unsigned char* rec = bytes.data() + r * record;
    // The last label byte is the fine label for CIFAR-100, the only one
    // for CIFAR-10.
    const int label = rec[label_bytes - 1];
    if (label >= class_count)
      throw Error(ErrorKind::label_out_of_range,
                  path.string() + ": record " + std::to_string(r) + " has label " +
                      std::to_string(label));
    Image img;
    img.height = 32;
    img.width = 32;
    img.channels = 3;
    img.values.resize(kCifarPixels);
    for (std::size_t i = 0; i < kCifarPixels; ++i)
      img.values[i] = static_cast<double>(rec[label_bytes + i]) / 255.0;
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }
  return data;
}

void append_dataset(Dataset& into, Dataset&& part) {
  into.images.insert(into.images.end(),
                     std::make_move_iterator(part.images.begin()),
                     std::make_move_iterator(part.images.end()));
  into.labels.insert(into.labels.end(), part.labels.begin(), part.labels.end());
}

}  // namespace

Dataset load_cifar10_file(const std::filesystem::path& file) {
  return read_cifar_records(file, 1, 10);
}

void write_cifar10_file(const Dataset& data, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out)
    throw Error(ErrorKind::io_failure, "cannot open for writing: " + file.string());
  std::vector<char> record(1 + kCifarPixels);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const Image& img = data.images[r];
    if (img.height != 32 || img.width != 32 || img.channels != 3)
      throw Error(ErrorKind::invalid_image,
                  "write_cifar10_file: images must be 32x32x3");
    if (data.labels[r] < 0 || data.labels[r] > 9)
      throw Error(ErrorKind::label_out_of_range,
                  "write_cifar10_file: label out of range");
    record[0] = static_cast<char>(data.labels[r]);
    for (std::size_t i = 0; i < kCifarPixels; ++i) {
      const long byte = std::lround(img.values[i] * 255.0);
      record[1 + i] = static_cast<char>(std::clamp(byte, 0L, 255L));
    }
    out.write(record.data(), static_cast<std::streamsize>(record.size()));
  }
  out.flush();
  if (!out)
    throw Error(ErrorKind::io_failure, "write failed: " + file.string());
}

std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir) {
  Dataset train;
  train.class_count = 10;
  train.split = Split::train;
  for (int i = 1; i <= 5; ++i) {
    const auto file = dir / ("data_batch_" + std::to_string(i) + ".bin");
    append_dataset(train, load_cifar10_file(file));
  }
  Dataset test = load_cifar10_file(dir / "test_batch.bin");
  test.split = Split::test;
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> load_cifar100(const std::filesystem::path& dir) {
  Dataset train = read_cifar_records(dir / "train.bin", 2, 100);
  train.split = Split::train;
  Dataset test = read_cifar_records(dir / "test.bin", 2, 100);
  test.split = Split::test;
  return {std::move(train), std::move(test)};
}

void validate(const AugmentPolicy& policy) {
  const auto probability = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0))
      throw Error(ErrorKind::config_invalid,
                  std::string(name) + " must lie in [0, 1]");
  };
  probability(policy.jitter_prob, "jitter_prob");
  probability(policy.grayscale_prob, "grayscale_prob");
  probability(policy.blur_prob, "blur_prob");
  probability(policy.flip_prob, "flip_prob");
  probability(policy.vector_dropout_prob, "vector_dropout_prob");
  if (!(policy.crop_scale_range[0] > 0.0 &&
        policy.crop_scale_range[0] <= policy.crop_scale_range[1] &&
        policy.crop_scale_range[1] <= 1.0))
    throw Error(ErrorKind::config_invalid,
                "crop_scale_range must satisfy 0 < lo <= hi <= 1");
  if (!(policy.crop_aspect_range[0] > 0.0 &&
        policy.crop_aspect_range[0] <= policy.crop_aspect_range[1]))
    throw Error(ErrorKind::config_invalid, "crop_aspect_range must be positive");
  if (!(policy.blur_sigma_range[0] > 0.0 &&
        policy.blur_sigma_range[0] <= policy.blur_sigma_range[1]))
    throw Error(ErrorKind::config_invalid, "blur_sigma_range must be positive");
  if (!(policy.jitter_brightness >= 0.0 && policy.jitter_contrast >= 0.0 &&
        policy.jitter_saturation >= 0.0 && policy.jitter_hue >= 0.0 &&
        policy.jitter_hue <= 0.5))
    throw Error(ErrorKind::config_invalid, "jitter strengths out of range");
  if (!(policy.vector_noise_sigma >= 0.0))
    throw Error(ErrorKind::config_invalid, "vector_noise_sigma must be >= 0");
  if (policy.channel_mean.size() != policy.channel_std.size())
    throw Error(ErrorKind::config_invalid,
                "channel_mean and channel_std must have the same length");
  for (double s : policy.channel_std)
    if (!(s > 0.0))
      throw Error(ErrorKind::config_invalid, "channel_std entries must be > 0");
}

namespace {

// --- geometric ops -------------------------------------------------------

Image resize_bilinear(const Image& src, std::size_t cx, std::size_t cy,
                      std::size_t cw, std::size_t ch, std::size_t out_w,
                      std::size_t out_h) {
  Image out;
  out.height = out_h;
  out.width = out_w;
  out.channels = src.channels;
  out.values.resize(out_h * out_w * src.channels);
  const double sx_scale = static_cast<double>(cw) / static_cast<double>(out_w);
  const double sy_scale = static_cast<double>(ch) / static_cast<double>(out_h);
  for (std::size_t c = 0; c < src.channels; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const double sy = (static_cast<double>(y) + 0.5) * sy_scale - 0.5;
      const double fy = sy - std::floor(sy);
      const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(sy));
      const std::size_t y0c = static_cast<std::size_t>(
          std::clamp<std::ptrdiff_t>(y0, 0, static_cast<std::ptrdiff_t>(ch) - 1));
      const std::size_t y1c = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
          y0 + 1, 0, static_cast<std::ptrdiff_t>(ch) - 1));
      for (std::size_t x = 0; x < out_w; ++x) {
        const double sx = (static_cast<double>(x) + 0.5) * sx_scale - 0.5;
        const double fx = sx - std::floor(sx);
        const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(sx));
        const std::size_t x0c = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
            x0, 0, static_cast<std::ptrdiff_t>(cw) - 1));
        const std::size_t x1c = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
            x0 + 1, 0, static_cast<std::ptrdiff_t>(cw) - 1));
        const double v00 = src.at(c, cy + y0c, cx + x0c);
        const double v01 = src.at(c, cy + y0c, cx + x1c);
        const double v10 = src.at(c, cy + y1c, cx + x0c);
        const double v11 = src.at(c, cy + y1c, cx + x1c);
        out.at(c, y, x) = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                          fy * ((1.0 - fx) * v10 + fx * v11);
      }
    }
  }
  return out;
}

Image random_resized_crop(const Image& img, const AugmentPolicy& policy,
                          Rng& rng) {
  const double area =
      static_cast<double>(img.height) * static_cast<double>(img.width);
  std::size_t cw = img.width, ch = img.height, cx = 0, cy = 0;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target =
        area * rng.uniform(policy.crop_scale_range[0], policy.crop_scale_range[1]);
    const double ratio = std::exp(rng.uniform(std::log(policy.crop_aspect_range[0]),
                                              std::log(policy.crop_aspect_range[1])));
    const long w = std::lround(std::sqrt(target * ratio));
    const long h = std::lround(std::sqrt(target / ratio));
    if (w >= 1 && h >= 1 && w <= static_cast<long>(img.width) &&
        h <= static_cast<long>(img.height)) {
      cw = static_cast<std::size_t>(w);
      ch = static_cast<std::size_t>(h);
      cx = static_cast<std::size_t>(rng.below(img.width - cw + 1));
      cy = static_cast<std::size_t>(rng.below(img.height - ch + 1));
      break;
    }
    // fall through with the full image if no attempt fits
  }
  return resize_bilinear(img, cx, cy, cw, ch, img.width, img.height);
}

// --- color ops -----------------------------------------------------------

double luma(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

void apply_brightness(Image& img, double factor) {
  for (auto& v : img.values) v = clamp01(v * factor);
}

void apply_contrast(Image& img, double factor) {
  double mean = 0.0;
  const std::size_t pixels = img.height * img.width;
  if (img.channels == 3) {
    for (std::size_t p = 0; p < pixels; ++p)
      mean += luma(img.values[p], img.values[pixels + p], img.values[2 * pixels + p]);
  } else {
    for (std::size_t p = 0; p < pixels; ++p) mean += img.values[p];
  }
  mean /= static_cast<double>(pixels);
  for (auto& v : img.values) v = clamp01(factor * v + (1.0 - factor) * mean);
}

void apply_saturation(Image& img, double factor) {
  if (img.channels != 3) return;
  const std::size_t pixels = img.height * img.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    const double gray =
        luma(img.values[p], img.values[pixels + p], img.values[2 * pixels + p]);
    img.values[p] = clamp01(factor * img.values[p] + (1.0 - factor) * gray);
    img.values[pixels + p] =
        clamp01(factor * img.values[pixels + p] + (1.0 - factor) * gray);
    img.values[2 * pixels + p] =
        clamp01(factor * img.values[2 * pixels + p] + (1.0 - factor) * gray);
  }
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx <= 0.0 ? 0.0 : d / mx;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = std::fmod((g - b) / d, 6.0);
  else if (mx == g)
    h = (b - r) / d + 2.0;
  else
    h = (r - g) / d + 4.0;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

void apply_hue(Image& img, double delta) {
  if (img.channels != 3) return;
  const std::size_t pixels = img.height * img.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    double h, s, v;
    rgb_to_hsv(img.values[p], img.values[pixels + p], img.values[2 * pixels + p],
               h, s, v);
    h = std::fmod(h + delta + 1.0, 1.0);
    hsv_to_rgb(h, s, v, img.values[p], img.values[pixels + p],
               img.values[2 * pixels + p]);
  }
}

void apply_grayscale(Image& img) {
  if (img.channels != 3) return;
  const std::size_t pixels = img.height * img.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    const double gray =
        luma(img.values[p], img.values[pixels + p], img.values[2 * pixels + p]);
    img.values[p] = gray;
    img.values[pixels + p] = gray;
    img.values[2 * pixels + p] = gray;
  }
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto size = static_cast<std::ptrdiff_t>(n);
  while (i < 0 || i >= size) {
    if (i < 0) i = -i - 1;
    if (i >= size) i = 2 * size - 1 - i;
  }
  return static_cast<std::size_t>(i);
}

Image gaussian_blur(const Image& img, double sigma) {
  const int radius = static_cast<int>(std::ceil(2.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (auto& w : kernel) w /= sum;

  Image horizontal = img;
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[static_cast<std::size_t>(i + radius)] *
                 img.at(c, y, reflect_index(static_cast<std::ptrdiff_t>(x) + i,
                                            img.width));
        horizontal.at(c, y, x) = acc;
      }
  Image out = horizontal;
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[static_cast<std::size_t>(i + radius)] *
                 horizontal.at(c, reflect_index(static_cast<std::ptrdiff_t>(y) + i,
                                                img.height),
                               x);
        out.at(c, y, x) = acc;
      }
  return out;
}

void apply_flip(Image& img) {
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width / 2; ++x)
        std::swap(img.at(c, y, x), img.at(c, y, img.width - 1 - x));
}

void normalize_in_place(Image& img, const AugmentPolicy& policy) {
  if (policy.channel_mean.empty()) return;
  if (policy.mode == AugmentMode::vector_features) {
    if (policy.channel_mean.size() != img.width)
      throw Error(ErrorKind::dimension_mismatch,
                  "normalization stats do not match feature width");
    for (std::size_t x = 0; x < img.width; ++x)
      img.values[x] = (img.values[x] - policy.channel_mean[x]) /
                      policy.channel_std[x];
    return;
  }
  if (policy.channel_mean.size() != img.channels)
    throw Error(ErrorKind::dimension_mismatch,
                "normalization stats do not match channel count");
  const std::size_t pixels = img.height * img.width;
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t p = 0; p < pixels; ++p)
      img.values[c * pixels + p] =
          (img.values[c * pixels + p] - policy.channel_mean[c]) /
          policy.channel_std[c];
}

Image augment_vector(const Image& img, const AugmentPolicy& policy, Rng& rng) {
  Image out = img;
  for (auto& v : out.values)
    v = clamp01(v + policy.vector_noise_sigma * rng.gaussian());
  for (auto& v : out.values)
    if (rng.uniform() < policy.vector_dropout_prob) v = 0.0;
  normalize_in_place(out, policy);
  return out;
}

}  // namespace

Image augment_view(const Image& image, const AugmentPolicy& policy, Rng& rng,
                   AugmentTrace* trace) {
  validate(policy);
  check_image(image);
  if (trace) *trace = AugmentTrace{};

  if (policy.mode == AugmentMode::vector_features)
    return augment_vector(image, policy, rng);

  Image out = random_resized_crop(image, policy, rng);
  if (rng.uniform() < policy.jitter_prob) {
    if (trace) trace->jitter = true;
    apply_brightness(out, rng.uniform(std::max(0.0, 1.0 - policy.jitter_brightness),
                                      1.0 + policy.jitter_brightness));
    apply_contrast(out, rng.uniform(std::max(0.0, 1.0 - policy.jitter_contrast),
                                    1.0 + policy.jitter_contrast));
    apply_saturation(out, rng.uniform(std::max(0.0, 1.0 - policy.jitter_saturation),
                                      1.0 + policy.jitter_saturation));
    apply_hue(out, rng.uniform(-policy.jitter_hue, policy.jitter_hue));
  }
  if (rng.uniform() < policy.grayscale_prob) {
    if (trace) trace->grayscale = true;
    apply_grayscale(out);
  }
  if (rng.uniform() < policy.blur_prob) {
    if (trace) trace->blur = true;
    out = gaussian_blur(
        out, rng.uniform(policy.blur_sigma_range[0], policy.blur_sigma_range[1]));
  }
  if (rng.uniform() < policy.flip_prob) {
    if (trace) trace->flip = true;
    apply_flip(out);
  }
  for (auto& v : out.values) v = clamp01(v);
  normalize_in_place(out, policy);
  return out;
}

std::pair<Image, Image> two_views(const Image& image, const AugmentPolicy& policy,
                                  Rng& rng) {
  Image first = augment_view(image, policy, rng);
  Image second = augment_view(image, policy, rng);
  return {std::move(first), std::move(second)};
}

Image normalize_only(const Image& image, const AugmentPolicy& policy) {
  validate(policy);
  check_image(image);
  Image out = image;
  normalize_in_place(out, policy);
  return out;
}

std::pair<std::vector<double>, std::vector<double>> compute_channel_stats(
    const Dataset& data, AugmentMode mode) {
  if (data.size() == 0)
    throw Error(ErrorKind::empty_input, "compute_channel_stats: empty dataset");
  const Image& first = data.images.front();
  const std::size_t bins =
      mode == AugmentMode::vector_features ? first.width : first.channels;
  std::vector<double> sum(bins, 0.0), sum_sq(bins, 0.0);
  std::vector<std::size_t> counts(bins, 0);
  for (const Image& img : data.images) {
    if (img.channels != first.channels || img.width != first.width ||
        img.height != first.height)
      throw Error(ErrorKind::shape_mismatch,
                  "compute_channel_stats: inconsistent image shapes");
    if (mode == AugmentMode::vector_features) {
      for (std::size_t x = 0; x < img.width; ++x) {
        sum[x] += img.values[x];
        sum_sq[x] += img.values[x] * img.values[x];
        ++counts[x];
      }
    } else {
      const std::size_t pixels = img.height * img.width;
      for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t p = 0; p < pixels; ++p) {
          const double v = img.values[c * pixels + p];
          sum[c] += v;
          sum_sq[c] += v * v;
          ++counts[c];
        }
    }
  }
  std::vector<double> mean(bins), stddev(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    mean[i] = sum[i] / static_cast<double>(counts[i]);
    const double var =
        std::max(0.0, sum_sq[i] / static_cast<double>(counts[i]) - mean[i] * mean[i]);
    stddev[i] = std::sqrt(var);
    if (stddev[i] < 1e-12) stddev[i] = 1.0;  // constant input: shift only
  }
  return {std::move(mean), std::move(stddev)};
}

std::vector<double> flatten(const Image& image) { return image.values; }

}  // namespace mohn
