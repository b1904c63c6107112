#include "mohn/encoder.hpp"

#include <cmath>
#include <string>

#include "mohn/error.hpp"
#include "mohn/rng.hpp"

namespace mohn {

void validate(const EncoderSpec& spec) {
  if (spec.layer_dims.size() < 2)
    throw Error(ErrorKind::invalid_spec,
                "encoder spec needs at least input and output dims");
  for (std::size_t d : spec.layer_dims)
    if (d < 1) throw Error(ErrorKind::invalid_spec, "encoder layer dims must be >= 1");
}

EncoderParams init_params(const EncoderSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  EncoderParams params;
  params.spec = spec;
  params.layers.reserve(spec.layer_count());
  for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l) {
    const std::size_t fan_in = spec.layer_dims[l];
    const std::size_t fan_out = spec.layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    LayerParams layer;
    layer.weight = Matrix(fan_out, fan_in);
    for (auto& w : layer.weight.values) w = rng.uniform(-bound, bound);
    layer.bias.assign(fan_out, 0.0);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace {

void apply_activation(Matrix& m, Activation activation) {
  if (activation == Activation::relu) {
    for (auto& v : m.values) v = v > 0.0 ? v : 0.0;
  } else {
    for (auto& v : m.values) v = std::tanh(v);
  }
}

Matrix affine(const LayerParams& layer, const Matrix& input) {
  const std::size_t in = layer.weight.cols;
  const std::size_t out = layer.weight.rows;
  Matrix result(input.rows, out);
  for (std::size_t r = 0; r < input.rows; ++r) {
    const double* x = input.values.data() + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* w = layer.weight.values.data() + o * in;
      double z = layer.bias[o];
      for (std::size_t i = 0; i < in; ++i) z += w[i] * x[i];
      result.at(r, o) = z;
    }
  }
  return result;
}

}  // namespace

Matrix forward(const EncoderParams& params, const Matrix& batch,
               ForwardCache* cache) {
  validate(params.spec);
  if (batch.cols != params.spec.input_dim())
    throw Error(ErrorKind::dimension_mismatch,
                "forward: batch has " + std::to_string(batch.cols) +
                    " columns, encoder expects " +
                    std::to_string(params.spec.input_dim()));
  if (cache) {
    cache->layer_inputs.clear();
    cache->norms.clear();
  }

  Matrix current = batch;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (cache) cache->layer_inputs.push_back(current);
    Matrix next = affine(params.layers[l], current);
    if (l + 1 < params.layers.size())
      apply_activation(next, params.spec.activation);
    current = std::move(next);
  }

  if (cache) cache->pre_norm = current;
  Matrix out(current.rows, current.cols);
  for (std::size_t r = 0; r < current.rows; ++r) {
    const double norm = l2_norm(current.row(r));
    if (norm <= kNormEpsilon)
      throw Error(ErrorKind::zero_norm,
                  "forward: embedding row " + std::to_string(r) +
                      " collapsed to zero norm");
    for (std::size_t c = 0; c < current.cols; ++c)
      out.at(r, c) = current.at(r, c) / norm;
    if (cache) cache->norms.push_back(norm);
  }
  return out;
}

EncoderGrads backward(const EncoderParams& params, const ForwardCache& cache,
                      const Matrix& grad_output) {
  const std::size_t layer_count = params.layers.size();
  const std::size_t batch = grad_output.rows;
  const bool stale =
      cache.layer_inputs.size() != layer_count || cache.norms.size() != batch ||
      cache.pre_norm.rows != batch ||
      cache.pre_norm.cols != params.spec.embedding_dim() ||
      grad_output.cols != params.spec.embedding_dim() ||
      cache.layer_inputs.front().rows != batch;
  if (stale)
    throw Error(ErrorKind::stale_cache,
                "backward: cache does not match parameters and grad_output");
  for (std::size_t l = 0; l < layer_count; ++l)
    if (cache.layer_inputs[l].cols != params.layers[l].weight.cols ||
        cache.layer_inputs[l].rows != batch)
      throw Error(ErrorKind::stale_cache, "backward: cached layer input shape is off");

  EncoderGrads grads;
  grads.layers.resize(layer_count);
  for (std::size_t l = 0; l < layer_count; ++l) {
    grads.layers[l].weight =
        Matrix(params.layers[l].weight.rows, params.layers[l].weight.cols);
    grads.layers[l].bias.assign(params.layers[l].bias.size(), 0.0);
  }

  // Through y = z / ||z||:  dL/dz = (g - u (u.g)) / ||z||  with u = z / ||z||.
  Matrix delta(batch, grad_output.cols);
  for (std::size_t r = 0; r < batch; ++r) {
    const double norm = cache.norms[r];
    const auto z = cache.pre_norm.row(r);
    const auto g = grad_output.row(r);
    double ug = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) ug += (z[c] / norm) * g[c];
    for (std::size_t c = 0; c < z.size(); ++c)
      delta.at(r, c) = (g[c] - (z[c] / norm) * ug) / norm;
  }

  for (std::size_t l = layer_count; l-- > 0;) {
    const Matrix& input = cache.layer_inputs[l];
    LayerParams& grad = grads.layers[l];
    const std::size_t out = grad.weight.rows;
    const std::size_t in = grad.weight.cols;
    for (std::size_t r = 0; r < batch; ++r) {
      const double* x = input.values.data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta.at(r, o);
        grad.bias[o] += d;
        double* wrow = grad.weight.values.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) wrow[i] += d * x[i];
      }
    }
    if (l == 0) break;

    // Pull delta through the weights and the previous activation.
    const Matrix& weight = params.layers[l].weight;
    Matrix prev(batch, in);
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t i = 0; i < in; ++i) {
        double sum = 0.0;
        for (std::size_t o = 0; o < out; ++o)
          sum += delta.at(r, o) * weight.at(o, i);
        const double a = input.at(r, i);  // activation output of layer l-1
        if (params.spec.activation == Activation::relu)
          sum = a > 0.0 ? sum : 0.0;
        else
          sum *= 1.0 - a * a;
        prev.at(r, i) = sum;
      }
    }
    delta = std::move(prev);
  }
  return grads;
}

EncoderPair make_encoder_pair(const EncoderSpec& spec, std::uint64_t seed,
                              double momentum_coefficient) {
  if (momentum_coefficient < 0.0 || momentum_coefficient > 1.0)
    throw Error(ErrorKind::config_invalid,
                "momentum coefficient must lie in [0, 1]");
  EncoderPair pair;
  pair.query = init_params(spec, seed);
  pair.key = pair.query;
  pair.momentum_coefficient = momentum_coefficient;
  return pair;
}

void momentum_update(EncoderPair& pair) {
  const double m = pair.momentum_coefficient;
  if (m < 0.0 || m > 1.0)
    throw Error(ErrorKind::config_invalid,
                "momentum coefficient must lie in [0, 1]");
  if (pair.key.layers.size() != pair.query.layers.size())
    throw Error(ErrorKind::shape_mismatch, "momentum_update: encoder shapes differ");
  for (std::size_t l = 0; l < pair.key.layers.size(); ++l) {
    auto& key = pair.key.layers[l];
    const auto& query = pair.query.layers[l];
    if (key.weight.values.size() != query.weight.values.size() ||
        key.bias.size() != query.bias.size())
      throw Error(ErrorKind::shape_mismatch, "momentum_update: layer shapes differ");
    for (std::size_t i = 0; i < key.weight.values.size(); ++i)
      key.weight.values[i] =
          m * key.weight.values[i] + (1.0 - m) * query.weight.values[i];
    for (std::size_t i = 0; i < key.bias.size(); ++i)
      key.bias[i] = m * key.bias[i] + (1.0 - m) * query.bias[i];
  }
}

}  // namespace mohn
