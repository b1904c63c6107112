#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mohn {

// Norms below this are treated as zero.
inline constexpr double kNormEpsilon = 1e-12;

// Tolerance for "this vector is supposed to be unit-norm" checks at
// module boundaries (memory bank rows, loss inputs).
inline constexpr double kUnitNormTolerance = 1e-6;

// Dense row-major matrix of doubles.  All heavy math in this codebase is
// 64-bit; there is deliberately no float path.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> v);

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }
};

bool all_finite(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);

double l2_norm(std::span<const double> v);

// Returns v / ||v||.  Rejects non-finite input and norms <= kNormEpsilon.
std::vector<double> l2_normalize(std::span<const double> v);
void l2_normalize_in_place(std::span<double> v);

bool is_unit_norm(std::span<const double> v, double tol = kUnitNormTolerance);

// dot(a, b) / (||a|| ||b||), clamped to [-1, 1] against rounding spill.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// max-shifted, so arbitrarily large logits stay finite.
double log_sum_exp(std::span<const double> xs);

}  // namespace mohn
