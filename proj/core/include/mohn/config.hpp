#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mohn/data.hpp"
#include "mohn/encoder.hpp"
#include "mohn/eval.hpp"
#include "mohn/objective.hpp"

namespace mohn {

// Where training data comes from.  "csv" points at a feature-vector file and
// is split via holdout_fraction; "cifar10" / "cifar100" point at a directory
// with the canonical binary files, which carry their own train/test split.
struct DataConfig {
  std::string kind = "csv";
  std::string path;
  double holdout_fraction = 0.1;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double sgd_momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::size_t queue_capacity = 512;
  double momentum_coefficient = 0.99;
  std::uint64_t seed = 1;
  std::size_t eval_interval = 50;      // 0 disables periodic evaluation
  std::size_t checkpoint_interval = 0; // 0 keeps only the final checkpoint
  std::string output_dir = "runs/default";
  LossConfig loss;
  EncoderSpec encoder{{64, 128, 64}, Activation::relu};
  DataConfig data;
  AugmentPolicy augment;
  KnnConfig knn;
};

// Dotted key -> value text, e.g. {"loss.temperature", "0.1"}.
using ConfigOverride = std::pair<std::string, std::string>;

// JSON object whose keys mirror the field names above, with loss / encoder /
// data / augment / knn as nested sections.  Missing keys keep their defaults;
// unknown keys raise ConfigInvalid naming the offending dotted path.
TrainConfig parse_train_config_text(
    const std::string& text, const std::vector<ConfigOverride>& overrides = {});

TrainConfig load_train_config(const std::filesystem::path& path,
                              const std::vector<ConfigOverride>& overrides = {});

// Canonical form (sorted keys, fixed indentation): equal configs serialize to
// equal strings, which checkpoint identity checks rely on.
std::string serialize_train_config(const TrainConfig& cfg);

void validate(const TrainConfig& cfg);  // ConfigInvalid

// True when the two configs describe the same optimization trajectory.
// output_dir, epochs, eval_interval, and checkpoint_interval are ignored: a
// resumed run may write elsewhere, train longer, or report differently
// without changing what the weights do.
bool same_run_identity(const TrainConfig& a, const TrainConfig& b);

// Every overridable dotted key, sorted; the CLI turns each into a flag.
std::vector<std::string> config_override_keys();

}  // namespace mohn
