#include "mohn/memory_bank.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "mohn/error.hpp"
#include "mohn/rng.hpp"

namespace mohn {

MemoryBank init_bank(std::size_t capacity, std::size_t dim, std::uint64_t seed) {
  if (capacity < 1)
    throw Error(ErrorKind::invalid_capacity, "bank capacity must be >= 1");
  if (dim < 1)
    throw Error(ErrorKind::invalid_capacity, "bank dim must be >= 1");
  MemoryBank bank;
  bank.capacity = capacity;
  bank.dim = dim;
  bank.storage = Matrix(capacity, dim);
  Rng rng(seed);
  for (std::size_t r = 0; r < capacity; ++r) {
    auto row = bank.storage.row(r);
    double norm = 0.0;
    do {
      for (auto& v : row) v = rng.gaussian();
      norm = l2_norm(row);
    } while (norm <= kNormEpsilon);
    for (auto& v : row) v /= norm;
  }
  bank.write_ptr = 0;
  bank.filled = capacity;
  return bank;
}

void enqueue(MemoryBank& bank, const Matrix& keys) {
  if (keys.rows == 0) throw Error(ErrorKind::empty_batch, "enqueue: empty batch");
  if (keys.cols != bank.dim)
    throw Error(ErrorKind::dimension_mismatch,
                "enqueue: key dim " + std::to_string(keys.cols) +
                    " does not match bank dim " + std::to_string(bank.dim));
  if (keys.rows > bank.capacity)
    throw Error(ErrorKind::batch_too_large,
                "enqueue: batch exceeds bank capacity");
  if (bank.capacity % keys.rows != 0)
    throw Error(ErrorKind::indivisible_capacity,
                "enqueue: bank capacity must be a multiple of the batch size");
  for (std::size_t r = 0; r < keys.rows; ++r)
    if (!is_unit_norm(keys.row(r)))
      throw Error(ErrorKind::not_normalized,
                  "enqueue: row " + std::to_string(r) + " is not unit-norm");

  for (std::size_t r = 0; r < keys.rows; ++r) {
    const std::size_t slot = (bank.write_ptr + r) % bank.capacity;
    auto dst = bank.storage.row(slot);
    const auto src = keys.row(r);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  bank.write_ptr = (bank.write_ptr + keys.rows) % bank.capacity;
  bank.filled = std::min(bank.filled + keys.rows, bank.capacity);
}

NegativeSelection select_hard_negatives(const MemoryBank& bank,
                                        std::span<const double> anchor,
                                        std::size_t f_n, SelectionBasis basis) {
  if (f_n < 1 || f_n > bank.filled)
    throw Error(ErrorKind::invalid_subset_size,
                "select_hard_negatives: need 1 <= f_n <= filled, got f_n=" +
                    std::to_string(f_n) + " filled=" + std::to_string(bank.filled));
  if (anchor.size() != bank.dim)
    throw Error(ErrorKind::dimension_mismatch,
                "select_hard_negatives: anchor dim does not match bank dim");
  if (!is_unit_norm(anchor))
    throw Error(ErrorKind::not_normalized,
                "select_hard_negatives: anchor is not unit-norm");

  std::vector<double> sims(bank.filled);
  for (std::size_t i = 0; i < bank.filled; ++i)
    sims[i] = dot(anchor, bank.storage.row(i));

  std::vector<std::size_t> order(bank.filled);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(f_n),
                    order.end(), [&sims](std::size_t a, std::size_t b) {
                      if (sims[a] != sims[b]) return sims[a] < sims[b];
                      return a < b;
                    });
  order.resize(f_n);
  return NegativeSelection{std::move(order), basis};
}

}  // namespace mohn
