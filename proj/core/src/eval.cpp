#include "mohn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mohn/error.hpp"

namespace mohn {

void validate(const KnnConfig& cfg) {
  if (cfg.neighbors < 1)
    throw Error(ErrorKind::config_invalid, "knn neighbors must be >= 1");
  if (!(cfg.temperature > 0.0))
    throw Error(ErrorKind::config_invalid, "knn temperature must be positive");
}

EmbeddingIndex embed_dataset(const EncoderParams& params, const Dataset& data,
                             const AugmentPolicy& policy) {
  const std::size_t input_dim = params.spec.input_dim();
  EmbeddingIndex index;
  index.labels = data.labels;
  index.embeddings = Matrix(data.size(), params.spec.embedding_dim());
  if (data.size() == 0) return index;

  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, data.size() - begin);
    Matrix batch(count, input_dim);
    for (std::size_t r = 0; r < count; ++r) {
      const auto row = flatten(normalize_only(data.images[begin + r], policy));
      if (row.size() != input_dim)
        throw Error(ErrorKind::dimension_mismatch,
                    "embed_dataset: item size " + std::to_string(row.size()) +
                        " does not match encoder input " +
                        std::to_string(input_dim));
      std::copy(row.begin(), row.end(), batch.row(r).begin());
    }
    const Matrix out = forward(params, batch);
    for (std::size_t r = 0; r < count; ++r) {
      const auto src = out.row(r);
      std::copy(src.begin(), src.end(), index.embeddings.row(begin + r).begin());
    }
  }
  return index;
}

std::map<int, double> knn_class_scores(const EmbeddingIndex& index,
                                       std::span<const double> query,
                                       const KnnConfig& cfg) {
  validate(cfg);
  const std::size_t n = index.embeddings.rows;
  if (n == 0) throw Error(ErrorKind::empty_index, "knn over an empty index");
  if (index.labels.size() != n)
    throw Error(ErrorKind::shape_mismatch, "index labels do not match rows");
  if (cfg.neighbors > n)
    throw Error(ErrorKind::k_too_large,
                "K=" + std::to_string(cfg.neighbors) + " exceeds index size " +
                    std::to_string(n));
  if (query.size() != index.embeddings.cols)
    throw Error(ErrorKind::dimension_mismatch,
                "query dimension does not match index");

  std::vector<double> sims(n);
  for (std::size_t i = 0; i < n; ++i)
    sims[i] = cosine_similarity(query, index.embeddings.row(i));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(),
                    order.begin() + static_cast<std::ptrdiff_t>(cfg.neighbors),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      if (sims[a] != sims[b]) return sims[a] > sims[b];
                      return a < b;
                    });

  std::map<int, double> scores;
  for (std::size_t k = 0; k < cfg.neighbors; ++k) {
    const std::size_t i = order[k];
    scores[index.labels[i]] += std::exp(sims[i] / cfg.temperature);
  }
  return scores;
}

int knn_predict(const EmbeddingIndex& index, std::span<const double> query,
                const KnnConfig& cfg) {
  const auto scores = knn_class_scores(index, query, cfg);
  int best_class = scores.begin()->first;
  double best_score = scores.begin()->second;
  for (const auto& [cls, score] : scores) {
    if (score > best_score) {
      best_score = score;
      best_class = cls;
    }
  }
  return best_class;
}

double knn_top1(const EmbeddingIndex& train, const EmbeddingIndex& test,
                const KnnConfig& cfg) {
  if (test.embeddings.rows == 0)
    throw Error(ErrorKind::empty_input, "knn_top1: empty test set");
  if (test.labels.size() != test.embeddings.rows)
    throw Error(ErrorKind::shape_mismatch, "test labels do not match rows");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < test.embeddings.rows; ++r)
    if (knn_predict(train, test.embeddings.row(r), cfg) == test.labels[r])
      ++hits;
  return static_cast<double>(hits) / static_cast<double>(test.embeddings.rows);
}

}  // namespace mohn
