#include "mohn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "mohn/error.hpp"

namespace mohn {

namespace {

namespace fs = std::filesystem;

constexpr const char* kMetricsHeader =
    "step,epoch,loss,loss_query_term,loss_key_term,lr,queue_ptr,knn_top1";

void say(const TrainSinks& sinks, const std::string& line) {
  if (sinks.info) sinks.info(line);
}

void check_layer_shapes(const std::vector<LayerParams>& a,
                        const std::vector<LayerParams>& b, const char* what) {
  if (a.size() != b.size())
    throw Error(ErrorKind::shape_mismatch,
                std::string(what) + ": layer count differs");
  for (std::size_t l = 0; l < a.size(); ++l)
    if (a[l].weight.rows != b[l].weight.rows ||
        a[l].weight.cols != b[l].weight.cols ||
        a[l].bias.size() != b[l].bias.size())
      throw Error(ErrorKind::shape_mismatch,
                  std::string(what) + ": layer " + std::to_string(l) +
                      " shapes differ");
}

std::size_t flat_dim(const Image& img) {
  return img.height * img.width * img.channels;
}

void check_data_against_config(const TrainConfig& cfg,
                               const SplitDataset& split) {
  if (split.train.size() == 0 || split.test.size() == 0)
    throw Error(ErrorKind::empty_input, "both splits need at least one item");
  if (cfg.batch_size > split.train.size())
    throw Error(ErrorKind::config_invalid,
                "batch_size " + std::to_string(cfg.batch_size) +
                    " exceeds the training split of " +
                    std::to_string(split.train.size()));
  const std::size_t input_dim = flat_dim(split.train.images.front());
  if (cfg.encoder.input_dim() != input_dim)
    throw Error(ErrorKind::dimension_mismatch,
                "encoder expects input dimension " +
                    std::to_string(cfg.encoder.input_dim()) + " but items have " +
                    std::to_string(input_dim));
}

void write_metrics_row(std::ofstream& out, const StepMetrics& m, double lr,
                       const std::optional<double>& knn) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%llu,%.12g,%.12g,%.12g,%.12g,%zu,",
                static_cast<unsigned long long>(m.step),
                static_cast<unsigned long long>(m.epoch), m.loss, m.query_term,
                m.key_term, lr, m.queue_ptr);
  out << buf;
  if (knn) {
    std::snprintf(buf, sizeof buf, "%.4f", *knn);
    out << buf;
  }
  out << "\n";
}

AugmentPolicy resolve_policy(const TrainConfig& cfg, const SplitDataset& split) {
  AugmentPolicy policy = cfg.augment;
  const Image& first = split.train.images.front();
  policy.mode = (first.height == 1 && first.channels == 1)
                    ? AugmentMode::vector_features
                    : AugmentMode::image;
  auto [mean, stddev] = compute_channel_stats(split.train, policy.mode);
  policy.channel_mean = std::move(mean);
  policy.channel_std = std::move(stddev);
  return policy;
}

TrainResult run_loop(TrainState& state, const SplitDataset& split,
                     const TrainSinks& sinks, bool append_metrics) {
  const TrainConfig& cfg = state.config;
  fs::create_directories(cfg.output_dir);
  const fs::path out_dir(cfg.output_dir);

  TrainResult result;
  result.metrics_path = out_dir / "metrics.csv";
  const bool write_header = !append_metrics || !fs::exists(result.metrics_path);
  std::ofstream metrics(result.metrics_path,
                        append_metrics ? std::ios::app : std::ios::trunc);
  if (!metrics)
    throw Error(ErrorKind::io_failure,
                "cannot open metrics file: " + result.metrics_path.string());
  if (write_header) metrics << kMetricsHeader << "\n";

  const std::size_t n = split.train.size();
  const std::size_t steps_per_epoch = n / cfg.batch_size;
  const std::uint64_t total_steps = cfg.epochs * steps_per_epoch;
  const std::size_t input_dim = state.encoders.query.spec.input_dim();

  while (state.step < total_steps) {
    if (state.permutation.empty()) {
      state.permutation.resize(n);
      std::iota(state.permutation.begin(), state.permutation.end(), 0);
      shuffle(state.permutation, state.loop_rng);
      state.epoch_pos = 0;
    }

    Matrix view1(cfg.batch_size, input_dim);
    Matrix view2(cfg.batch_size, input_dim);
    const std::size_t base = state.epoch_pos * cfg.batch_size;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      const Image& img =
          split.train.images[static_cast<std::size_t>(state.permutation[base + i])];
      const auto views = two_views(img, state.policy, state.loop_rng);
      const auto row1 = flatten(views.first);
      const auto row2 = flatten(views.second);
      std::copy(row1.begin(), row1.end(), view1.row(i).begin());
      std::copy(row2.begin(), row2.end(), view2.row(i).begin());
    }

    const StepMetrics m = train_step(state, view1, view2);
    state.epoch_pos += 1;
    if (state.epoch_pos == steps_per_epoch) {
      state.epoch += 1;
      state.epoch_pos = 0;
      state.permutation.clear();
    }

    std::optional<double> knn;
    if (cfg.eval_interval > 0 &&
        (m.step % cfg.eval_interval == 0 || m.step == total_steps)) {
      knn = evaluate_knn(state, split, sinks);
      result.final_knn = knn;
      char buf[96];
      std::snprintf(buf, sizeof buf, "step %llu: knn_top1 %.4f",
                    static_cast<unsigned long long>(m.step), *knn);
      say(sinks, buf);
    }
    write_metrics_row(metrics, m, cfg.learning_rate, knn);

    if (cfg.checkpoint_interval > 0 && m.step % cfg.checkpoint_interval == 0 &&
        m.step != total_steps) {
      const fs::path path =
          out_dir / ("checkpoint_" + std::to_string(m.step) + ".mohn");
      save_checkpoint(snapshot(state), path);
      say(sinks, "wrote " + path.string());
    }
  }

  metrics.flush();
  if (!metrics)
    throw Error(ErrorKind::io_failure,
                "write failed: " + result.metrics_path.string());

  result.checkpoint_path = out_dir / "checkpoint_final.mohn";
  save_checkpoint(snapshot(state), result.checkpoint_path);
  say(sinks, "wrote " + result.checkpoint_path.string());
  result.steps = state.step;
  return result;
}

}  // namespace

OptimizerState init_optimizer_state(const EncoderParams& params) {
  OptimizerState state;
  state.velocity.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    LayerParams v;
    v.weight = Matrix(layer.weight.rows, layer.weight.cols);
    v.bias.assign(layer.bias.size(), 0.0);
    state.velocity.push_back(std::move(v));
  }
  return state;
}

void sgd_step(EncoderParams& params, const EncoderGrads& grads,
              OptimizerState& state, double lr, double mu, double lambda) {
  check_layer_shapes(params.layers, grads.layers, "sgd_step grads");
  check_layer_shapes(params.layers, state.velocity, "sgd_step velocity");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    const auto& grad = grads.layers[l];
    auto& vel = state.velocity[l];
    for (std::size_t i = 0; i < layer.weight.values.size(); ++i) {
      double& v = vel.weight.values[i];
      double& w = layer.weight.values[i];
      v = mu * v + (grad.weight.values[i] + lambda * w);
      w -= lr * v;
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      double& v = vel.bias[i];
      double& b = layer.bias[i];
      v = mu * v + (grad.bias[i] + lambda * b);
      b -= lr * v;
    }
  }
}

std::pair<Matrix, std::vector<std::size_t>> shuffle_batch(const Matrix& batch,
                                                          Rng& rng) {
  if (batch.rows == 0)
    throw Error(ErrorKind::empty_batch, "shuffle_batch on an empty batch");
  std::vector<std::size_t> perm(batch.rows);
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  Matrix shuffled(batch.rows, batch.cols);
  for (std::size_t i = 0; i < batch.rows; ++i) {
    const auto src = batch.row(perm[i]);
    std::copy(src.begin(), src.end(), shuffled.row(i).begin());
  }
  return {std::move(shuffled), std::move(perm)};
}

Matrix unshuffle_batch(const Matrix& shuffled,
                       const std::vector<std::size_t>& perm) {
  if (shuffled.rows == 0)
    throw Error(ErrorKind::empty_batch, "unshuffle_batch on an empty batch");
  if (perm.size() != shuffled.rows)
    throw Error(ErrorKind::shape_mismatch,
                "permutation length does not match batch rows");
  Matrix out(shuffled.rows, shuffled.cols);
  for (std::size_t i = 0; i < shuffled.rows; ++i) {
    if (perm[i] >= shuffled.rows)
      throw Error(ErrorKind::shape_mismatch, "permutation entry out of range");
    const auto src = shuffled.row(i);
    std::copy(src.begin(), src.end(), out.row(perm[i]).begin());
  }
  return out;
}

SplitDataset split_holdout(const Dataset& data, double holdout_fraction,
                           std::uint64_t seed) {
  if (data.size() < 2)
    throw Error(ErrorKind::empty_input, "need at least 2 items to split");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw Error(ErrorKind::config_invalid,
                "holdout_fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  const auto raw =
      static_cast<std::size_t>(std::lround(holdout_fraction * static_cast<double>(n)));
  const std::size_t n_test = std::clamp<std::size_t>(raw, 1, n - 1);

  std::vector<std::uint64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 1));
  shuffle(order, rng);
  std::vector<char> is_test(n, 0);
  for (std::size_t i = 0; i < n_test; ++i)
    is_test[static_cast<std::size_t>(order[i])] = 1;

  SplitDataset out;
  out.train.split = Split::train;
  out.test.split = Split::test;
  out.train.class_count = data.class_count;
  out.test.class_count = data.class_count;
  for (std::size_t i = 0; i < n; ++i) {
    Dataset& side = is_test[i] ? out.test : out.train;
    side.images.push_back(data.images[i]);
    side.labels.push_back(data.labels[i]);
  }
  return out;
}

SplitDataset load_split(const DataConfig& data, std::uint64_t seed) {
  if (data.kind == "csv")
    return split_holdout(read_dataset_csv(data.path), data.holdout_fraction,
                         seed);
  if (data.kind == "cifar10") {
    auto [train, test] = load_cifar10(data.path);
    return {std::move(train), std::move(test)};
  }
  if (data.kind == "cifar100") {
    auto [train, test] = load_cifar100(data.path);
    return {std::move(train), std::move(test)};
  }
  throw Error(ErrorKind::config_invalid,
              "data.kind must be one of csv, cifar10, cifar100");
}

TrainState init_train_state(const TrainConfig& cfg, const SplitDataset& split) {
  validate(cfg);
  check_data_against_config(cfg, split);

  TrainState state;
  state.config = cfg;
  state.policy = resolve_policy(cfg, split);
  state.encoders = make_encoder_pair(cfg.encoder, mix_seed(cfg.seed, 2),
                                     cfg.momentum_coefficient);
  state.optimizer = init_optimizer_state(state.encoders.query);
  state.bank = init_bank(cfg.queue_capacity, cfg.encoder.embedding_dim(),
                         mix_seed(cfg.seed, 3));
  state.loop_rng = Rng(mix_seed(cfg.seed, 4));
  return state;
}

TrainState restore_train_state(const TrainConfig& cfg, const Checkpoint& ckpt) {
  validate(cfg);
  if (!same_run_identity(cfg, ckpt.config))
    throw Error(ErrorKind::config_invalid,
                "config does not describe the checkpointed run");

  TrainState state;
  state.config = cfg;
  state.policy = cfg.augment;
  state.policy.mode = ckpt.vector_mode ? AugmentMode::vector_features
                                       : AugmentMode::image;
  state.policy.channel_mean = ckpt.feature_mean;
  state.policy.channel_std = ckpt.feature_std;
  state.encoders.query = ckpt.query;
  state.encoders.key = ckpt.key;
  state.encoders.momentum_coefficient = cfg.momentum_coefficient;
  state.optimizer.velocity = ckpt.velocity;
  state.bank = ckpt.bank;
  state.loop_rng.set_state(ckpt.rng_state);
  state.step = ckpt.step;
  state.epoch = ckpt.epoch;
  state.epoch_pos = ckpt.epoch_pos;
  state.permutation = ckpt.permutation;
  return state;
}

Checkpoint snapshot(const TrainState& state) {
  Checkpoint ckpt;
  ckpt.config = state.config;
  ckpt.query = state.encoders.query;
  ckpt.key = state.encoders.key;
  ckpt.velocity = state.optimizer.velocity;
  ckpt.bank = state.bank;
  ckpt.rng_state = state.loop_rng.state();
  ckpt.step = state.step;
  ckpt.epoch = state.epoch;
  ckpt.epoch_pos = state.epoch_pos;
  ckpt.permutation = state.permutation;
  ckpt.vector_mode =
      state.policy.mode == AugmentMode::vector_features ? 1 : 0;
  ckpt.feature_mean = state.policy.channel_mean;
  ckpt.feature_std = state.policy.channel_std;
  return ckpt;
}

StepMetrics train_step(TrainState& state, const Matrix& view1,
                       const Matrix& view2) {
  ForwardCache cache;
  const Matrix q = forward(state.encoders.query, view1, &cache);
  auto [shuffled, perm] = shuffle_batch(view2, state.loop_rng);
  const Matrix k = unshuffle_batch(forward(state.encoders.key, shuffled), perm);

  const BatchLoss batch = batch_filtered_loss(q, k, state.bank, state.config.loss);
  const EncoderGrads grads = backward(state.encoders.query, cache, batch.grad_q);
  sgd_step(state.encoders.query, grads, state.optimizer,
           state.config.learning_rate, state.config.sgd_momentum,
           state.config.weight_decay);
  momentum_update(state.encoders);
  enqueue(state.bank, k);

  state.step += 1;
  StepMetrics m;
  m.step = state.step;
  m.epoch = state.epoch + 1;
  m.loss = batch.total;
  m.query_term = batch.query_term;
  m.key_term = batch.key_term;
  m.queue_ptr = state.bank.write_ptr;
  return m;
}

double evaluate_knn(const TrainState& state, const SplitDataset& split,
                    const TrainSinks& sinks) {
  KnnConfig cfg = state.config.knn;
  if (cfg.neighbors > split.train.size()) {
    cfg.neighbors = split.train.size();
    say(sinks, "knn neighbors clamped to the training split size " +
                   std::to_string(cfg.neighbors));
  }
  const EmbeddingIndex train_index =
      embed_dataset(state.encoders.query, split.train, state.policy);
  const EmbeddingIndex test_index =
      embed_dataset(state.encoders.query, split.test, state.policy);
  return knn_top1(train_index, test_index, cfg);
}

TrainResult train(const TrainConfig& cfg, const TrainSinks& sinks) {
  return train_on(cfg, load_split(cfg.data, cfg.seed), sinks);
}

TrainResult train_on(const TrainConfig& cfg, const SplitDataset& split,
                     const TrainSinks& sinks) {
  TrainState state = init_train_state(cfg, split);
  return run_loop(state, split, sinks, /*append_metrics=*/false);
}

TrainResult resume_training(const TrainConfig& cfg,
                            const std::filesystem::path& checkpoint_path,
                            const TrainSinks& sinks) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  return resume_on(cfg, load_split(cfg.data, cfg.seed), ckpt, sinks);
}

TrainResult resume_on(const TrainConfig& cfg, const SplitDataset& split,
                      const Checkpoint& ckpt, const TrainSinks& sinks) {
  TrainState state = restore_train_state(cfg, ckpt);
  check_data_against_config(cfg, split);
  if (!state.permutation.empty() &&
      state.permutation.size() != split.train.size())
    throw Error(ErrorKind::config_invalid,
                "dataset size does not match the checkpointed epoch order");
  return run_loop(state, split, sinks, /*append_metrics=*/true);
}

}  // namespace mohn
