#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mohn/numeric.hpp"

namespace mohn {

// Which embedding anchored a hard-negative selection.
enum class SelectionBasis { query, key };

// Fixed-capacity circular queue of unit-norm key embeddings.  Starts full
// of random directions so the denominator of the contrastive loss is well
// defined from step one; training batches then overwrite it FIFO.
struct MemoryBank {
  std::size_t capacity = 0;
  std::size_t dim = 0;
  Matrix storage;              // capacity x dim
  std::size_t write_ptr = 0;   // next slot to overwrite
  std::size_t filled = 0;
};

MemoryBank init_bank(std::size_t capacity, std::size_t dim, std::uint64_t seed);

// Writes keys.rows rows at write_ptr (wrapping) and advances the pointer.
// capacity must be a multiple of the batch size so epochs tile the ring.
void enqueue(MemoryBank& bank, const Matrix& keys);

struct NegativeSelection {
  std::vector<std::size_t> indices;  // ascending by (similarity, index)
  SelectionBasis basis = SelectionBasis::query;
};

// The f_n rows with the smallest cosine similarity to the anchor, i.e. the
// negatives farthest from it on the unit sphere.  Ties break toward the
// lower row index.
NegativeSelection select_hard_negatives(const MemoryBank& bank,
                                        std::span<const double> anchor,
                                        std::size_t f_n, SelectionBasis basis);

}  // namespace mohn
