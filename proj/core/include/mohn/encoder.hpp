#pragma once

#include <cstdint>
#include <vector>

#include "mohn/numeric.hpp"

namespace mohn {

enum class Activation { relu, tanh };

// Fully connected architecture: layer_dims = [input, hidden..., embedding].
// Hidden layers apply the activation; the final affine output is fed
// straight into per-row L2 normalization.
struct EncoderSpec {
  std::vector<std::size_t> layer_dims;
  Activation activation = Activation::relu;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t embedding_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return layer_dims.size() - 1; }
};

void validate(const EncoderSpec& spec);  // InvalidSpec

struct LayerParams {
  Matrix weight;              // fan_out x fan_in
  std::vector<double> bias;   // fan_out
};

struct EncoderParams {
  EncoderSpec spec;
  std::vector<LayerParams> layers;
};

// Same tensor shapes as the parameters they differentiate.
struct EncoderGrads {
  std::vector<LayerParams> layers;
};

// Xavier-uniform weights, zero biases, reproducible for a given seed.
EncoderParams init_params(const EncoderSpec& spec, std::uint64_t seed);

// Intermediate values forward() stores so backward() can run.
struct ForwardCache {
  std::vector<Matrix> layer_inputs;  // input to each affine layer
  Matrix pre_norm;                   // final affine output, before normalization
  std::vector<double> norms;         // per-row norm of pre_norm
};

// Batch rows in, unit-norm embedding rows out.  Pass a cache to enable
// backward(); the momentum-encoder path runs without one, which is what
// structurally guarantees no gradient ever reaches those weights.
Matrix forward(const EncoderParams& params, const Matrix& batch,
               ForwardCache* cache = nullptr);

// grad_output holds dLoss/dEmbedding per row; gradients are summed over
// rows, so a batch mean must be folded into grad_output by the caller.
EncoderGrads backward(const EncoderParams& params, const ForwardCache& cache,
                      const Matrix& grad_output);

struct EncoderPair {
  EncoderParams query;
  EncoderParams key;
  double momentum_coefficient = 0.99;
};

// Key weights start as an exact copy of the query weights.
EncoderPair make_encoder_pair(const EncoderSpec& spec, std::uint64_t seed,
                              double momentum_coefficient);

// key <- m * key + (1 - m) * query, entrywise.
void momentum_update(EncoderPair& pair);

}  // namespace mohn
