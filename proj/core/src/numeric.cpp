#include "mohn/numeric.hpp"

#include <algorithm>
#include <cmath>

#include "mohn/error.hpp"

namespace mohn {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::zero_norm: return "ZeroNorm";
    case ErrorKind::dimension_mismatch: return "DimensionMismatch";
    case ErrorKind::empty_input: return "EmptyInput";
    case ErrorKind::non_finite: return "NonFinite";
    case ErrorKind::invalid_spec: return "InvalidSpec";
    case ErrorKind::stale_cache: return "StaleCache";
    case ErrorKind::invalid_capacity: return "InvalidCapacity";
    case ErrorKind::batch_too_large: return "BatchTooLarge";
    case ErrorKind::indivisible_capacity: return "IndivisibleCapacity";
    case ErrorKind::not_normalized: return "NotNormalized";
    case ErrorKind::invalid_subset_size: return "InvalidSubsetSize";
    case ErrorKind::invalid_shape: return "InvalidShape";
    case ErrorKind::missing_file: return "MissingFile";
    case ErrorKind::truncated_record: return "TruncatedRecord";
    case ErrorKind::label_out_of_range: return "LabelOutOfRange";
    case ErrorKind::invalid_image: return "InvalidImage";
    case ErrorKind::empty_batch: return "EmptyBatch";
    case ErrorKind::shape_mismatch: return "ShapeMismatch";
    case ErrorKind::config_invalid: return "ConfigInvalid";
    case ErrorKind::io_failure: return "IoFailure";
    case ErrorKind::version_mismatch: return "VersionMismatch";
    case ErrorKind::corrupt_checkpoint: return "CorruptCheckpoint";
    case ErrorKind::k_too_large: return "KTooLarge";
    case ErrorKind::empty_index: return "EmptyIndex";
  }
  return "UnknownError";
}

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> v)
    : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != rows * cols)
    throw Error(ErrorKind::shape_mismatch,
                "matrix storage size does not match rows*cols");
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorKind::dimension_mismatch, "dot: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

std::vector<double> l2_normalize(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  l2_normalize_in_place(out);
  return out;
}

void l2_normalize_in_place(std::span<double> v) {
  if (v.empty()) throw Error(ErrorKind::empty_input, "l2_normalize: empty vector");
  if (!all_finite(v))
    throw Error(ErrorKind::non_finite, "l2_normalize: non-finite entry");
  const double norm = l2_norm(v);
  if (norm <= kNormEpsilon)
    throw Error(ErrorKind::zero_norm, "l2_normalize: norm below epsilon");
  for (auto& x : v) x /= norm;
}

bool is_unit_norm(std::span<const double> v, double tol) {
  return std::abs(l2_norm(v) - 1.0) <= tol;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorKind::dimension_mismatch, "cosine_similarity: size mismatch");
  if (a.empty()) throw Error(ErrorKind::empty_input, "cosine_similarity: empty input");
  if (!all_finite(a) || !all_finite(b))
    throw Error(ErrorKind::non_finite, "cosine_similarity: non-finite entry");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na <= kNormEpsilon || nb <= kNormEpsilon)
    throw Error(ErrorKind::zero_norm, "cosine_similarity: zero-norm argument");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) throw Error(ErrorKind::empty_input, "log_sum_exp: empty input");
  if (!all_finite(xs))
    throw Error(ErrorKind::non_finite, "log_sum_exp: non-finite entry");
  const double m = *std::max_element(xs.begin(), xs.end());
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - m);
  return m + std::log(sum);
}

}  // namespace mohn
