#pragma once

#include <map>
#include <span>
#include <vector>

#include "mohn/data.hpp"
#include "mohn/encoder.hpp"
#include "mohn/numeric.hpp"

namespace mohn {

struct EmbeddingIndex {
  Matrix embeddings;        // N x D, unit rows
  std::vector<int> labels;  // N entries
};

struct KnnConfig {
  std::size_t neighbors = 200;
  double temperature = 0.1;
};

void validate(const KnnConfig& cfg);  // ConfigInvalid

// Deterministic embeddings: normalization only (no stochastic augmentation),
// forwarded through the given encoder in chunks.
EmbeddingIndex embed_dataset(const EncoderParams& params, const Dataset& data,
                             const AugmentPolicy& policy);

// Per-class vote mass of the K nearest neighbors: sum of exp(cos_sim / tau)
// over selected neighbors with that label.  Neighbor ties break toward the
// lower row index.  Exposed so the vote itself is testable.
std::map<int, double> knn_class_scores(const EmbeddingIndex& index,
                                       std::span<const double> query,
                                       const KnnConfig& cfg);

// Argmax over knn_class_scores; score ties break toward the lower class id.
int knn_predict(const EmbeddingIndex& index, std::span<const double> query,
                const KnnConfig& cfg);

// Fraction of test rows whose prediction against the train index matches the
// test label.
double knn_top1(const EmbeddingIndex& train, const EmbeddingIndex& test,
                const KnnConfig& cfg);

}  // namespace mohn
