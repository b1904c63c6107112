#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mohn/checkpoint.hpp"
#include "mohn/config.hpp"
#include "mohn/data.hpp"
#include "mohn/encoder.hpp"
#include "mohn/eval.hpp"
#include "mohn/memory_bank.hpp"
#include "mohn/objective.hpp"
#include "mohn/rng.hpp"

namespace mohn {

struct OptimizerState {
  std::vector<LayerParams> velocity;  // query-parameter shapes, zero-initialized
};

OptimizerState init_optimizer_state(const EncoderParams& params);

// v <- mu * v + (g + lambda * theta);  theta <- theta - lr * v
void sgd_step(EncoderParams& params, const EncoderGrads& grads,
              OptimizerState& state, double lr, double mu, double lambda);

// Uniformly random row permutation; shuffled row i = batch row perm[i].
std::pair<Matrix, std::vector<std::size_t>> shuffle_batch(const Matrix& batch,
                                                          Rng& rng);
Matrix unshuffle_batch(const Matrix& shuffled,
                       const std::vector<std::size_t>& perm);

struct SplitDataset {
  Dataset train;
  Dataset test;
};

// csv data gets a seeded random holdout split (stable item order within each
// side); cifar kinds read their canonical train/test files.
SplitDataset load_split(const DataConfig& data, std::uint64_t seed);

// Split out for tests that build datasets in memory.
SplitDataset split_holdout(const Dataset& data, double holdout_fraction,
                           std::uint64_t seed);

struct StepMetrics {
  std::uint64_t step = 0;   // 1-based
  std::uint64_t epoch = 0;  // 1-based
  double loss = 0.0;
  double query_term = 0.0;
  double key_term = 0.0;
  std::size_t queue_ptr = 0;  // bank write pointer after the enqueue
};

struct TrainState {
  TrainConfig config;
  AugmentPolicy policy;  // config.augment with mode and statistics resolved
  EncoderPair encoders;
  OptimizerState optimizer;
  MemoryBank bank;
  Rng loop_rng{0};

  std::uint64_t step = 0;
  std::uint64_t epoch = 0;      // epoch the next step belongs to (0-based)
  std::uint64_t epoch_pos = 0;  // completed steps within that epoch
  std::vector<std::uint64_t> permutation;  // current epoch order, empty at
                                           // epoch boundaries
};

// Seeds every stream from config.seed, resolves the augmentation policy from
// the training split, and checks config against data shapes.
TrainState init_train_state(const TrainConfig& cfg, const SplitDataset& split);

// Rebuilds a state from a checkpoint.  cfg must describe the same run
// (same_run_identity), but may move output_dir or extend epochs.
TrainState restore_train_state(const TrainConfig& cfg, const Checkpoint& ckpt);

Checkpoint snapshot(const TrainState& state);

// One optimization step, in order: query forward on view1; key forward on
// shuffled view2 without gradients, then unshuffle; filtered dual-view loss;
// backprop into the query encoder only; SGD on query weights; EMA update of
// key weights; enqueue keys.
StepMetrics train_step(TrainState& state, const Matrix& view1,
                       const Matrix& view2);

struct TrainSinks {
  // Human-readable progress lines; defaults to dropping them.
  std::function<void(const std::string&)> info;
};

struct TrainResult {
  std::uint64_t steps = 0;
  std::optional<double> final_knn;
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;  // the final checkpoint
};

// Full run: writes metrics.csv, periodic checkpoints, and a final checkpoint
// under config.output_dir.  train_on skips dataset loading; resume_on picks
// up from a checkpoint and appends to an existing metrics file.
TrainResult train(const TrainConfig& cfg, const TrainSinks& sinks = {});
TrainResult train_on(const TrainConfig& cfg, const SplitDataset& split,
                     const TrainSinks& sinks = {});
TrainResult resume_training(const TrainConfig& cfg,
                            const std::filesystem::path& checkpoint_path,
                            const TrainSinks& sinks = {});
TrainResult resume_on(const TrainConfig& cfg, const SplitDataset& split,
                      const Checkpoint& ckpt, const TrainSinks& sinks = {});

// KNN accuracy of the current query encoder on the split, with K clamped to
// the training-split size.
double evaluate_knn(const TrainState& state, const SplitDataset& split,
                    const TrainSinks& sinks = {});

}  // namespace mohn
