#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mohn/checkpoint.hpp"
#include "mohn/config.hpp"
#include "mohn/data.hpp"
#include "mohn/error.hpp"
#include "mohn/eval.hpp"
#include "mohn/memory_bank.hpp"
#include "mohn/objective.hpp"
#include "mohn/trainer.hpp"

namespace {

// 0 success, 1 numeric failure, 2 usage/config error, 3 I/O error.
int exit_code_for(mohn::ErrorKind kind) {
  using K = mohn::ErrorKind;
  switch (kind) {
    case K::config_invalid:
    case K::invalid_spec:
    case K::invalid_shape:
    case K::invalid_capacity:
    case K::invalid_subset_size:
    case K::k_too_large:
    case K::dimension_mismatch:
    case K::empty_input:
    case K::empty_batch:
    case K::empty_index:
    case K::batch_too_large:
    case K::indivisible_capacity:
      return 2;
    case K::io_failure:
    case K::missing_file:
    case K::truncated_record:
    case K::label_out_of_range:
    case K::corrupt_checkpoint:
    case K::version_mismatch:
      return 3;
    default:
      return 1;
  }
}

mohn::TrainSinks stderr_sinks() {
  mohn::TrainSinks sinks;
  sinks.info = [](const std::string& line) { std::cerr << line << "\n"; };
  return sinks;
}

struct GenDataArgs {
  int classes = 10;
  int per_class = 100;
  int dim = 64;
  double spread = 0.1;
  std::uint64_t seed = 1;
  std::string out;
};

int run_gen_data(const GenDataArgs& args) {
  const mohn::Dataset data = mohn::gen_clusters(args.classes, args.per_class,
                                                args.dim, args.spread, args.seed);
  mohn::write_dataset_csv(data, args.out);
  std::cerr << "wrote " << args.out << "\n";
  std::printf("items=%zu\n", data.size());
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::string resume_path;
  std::vector<mohn::ConfigOverride> overrides;
};

int run_train(const TrainArgs& args) {
  const mohn::TrainConfig cfg =
      mohn::load_train_config(args.config_path, args.overrides);
  const mohn::TrainSinks sinks = stderr_sinks();
  const mohn::TrainResult result =
      args.resume_path.empty()
          ? mohn::train(cfg, sinks)
          : mohn::resume_training(cfg, args.resume_path, sinks);
  std::cerr << "finished after " << result.steps << " steps; metrics at "
            << result.metrics_path.string() << "\n";
  if (result.final_knn) std::printf("knn_top1=%.4f\n", *result.final_knn);
  return 0;
}

struct EvalKnnArgs {
  std::string checkpoint_path;
  std::string data_path;
  std::optional<std::size_t> k;
  std::optional<double> tau;
};

int run_eval_knn(const EvalKnnArgs& args) {
  const mohn::Checkpoint ckpt = mohn::load_checkpoint(args.checkpoint_path);

  mohn::DataConfig data_cfg = ckpt.config.data;
  if (!args.data_path.empty()) data_cfg.path = args.data_path;
  const mohn::SplitDataset split = mohn::load_split(data_cfg, ckpt.config.seed);

  mohn::AugmentPolicy policy = ckpt.config.augment;
  policy.mode = ckpt.vector_mode ? mohn::AugmentMode::vector_features
                                 : mohn::AugmentMode::image;
  policy.channel_mean = ckpt.feature_mean;
  policy.channel_std = ckpt.feature_std;

  mohn::KnnConfig knn = ckpt.config.knn;
  if (args.tau) knn.temperature = *args.tau;
  if (args.k) {
    knn.neighbors = *args.k;  // explicit K is taken literally; may be too large
  } else if (knn.neighbors > split.train.size()) {
    knn.neighbors = split.train.size();
    std::cerr << "knn neighbors clamped to the training split size "
              << knn.neighbors << "\n";
  }

  const mohn::EmbeddingIndex train_index =
      mohn::embed_dataset(ckpt.query, split.train, policy);
  const mohn::EmbeddingIndex test_index =
      mohn::embed_dataset(ckpt.query, split.test, policy);
  const double accuracy = mohn::knn_top1(train_index, test_index, knn);
  std::printf("knn_top1=%.4f\n", accuracy);
  return 0;
}

struct GradCheckArgs {
  std::uint64_t seed = 1;
  std::size_t dim = 8;
  std::size_t batch = 4;
  std::size_t queue = 32;
  bool corrupt = false;
};

int run_grad_check(const GradCheckArgs& args) {
  if (args.dim < 2 || args.dim > 32)
    throw mohn::Error(mohn::ErrorKind::config_invalid,
                      "grad-check dim must lie in [2, 32]");
  if (args.batch < 1 || args.batch > 8)
    throw mohn::Error(mohn::ErrorKind::config_invalid,
                      "grad-check batch must lie in [1, 8]");

  const mohn::EncoderSpec spec{{args.dim, 2 * args.dim, args.dim},
                               mohn::Activation::relu};
  mohn::EncoderParams params = mohn::init_params(spec, mohn::mix_seed(args.seed, 2));
  const mohn::EncoderParams key_params =
      mohn::init_params(spec, mohn::mix_seed(args.seed, 5));
  const mohn::MemoryBank bank =
      mohn::init_bank(args.queue, args.dim, mohn::mix_seed(args.seed, 3));

  mohn::Rng rng(mohn::mix_seed(args.seed, 4));
  mohn::Matrix view1(args.batch, args.dim);
  mohn::Matrix view2(args.batch, args.dim);
  for (auto& v : view1.values) v = rng.uniform();
  for (auto& v : view2.values) v = rng.uniform();

  const mohn::LossConfig loss_cfg;
  const mohn::Matrix k = mohn::forward(key_params, view2);

  mohn::ForwardCache cache;
  const mohn::Matrix q = mohn::forward(params, view1, &cache);
  const mohn::BatchLoss batch = mohn::batch_filtered_loss(q, k, bank, loss_cfg);
  mohn::EncoderGrads grads = mohn::backward(params, cache, batch.grad_q);
  if (args.corrupt) grads.layers[0].weight.values[0] += 1e-2;

  const auto loss_at = [&]() {
    return mohn::batch_filtered_loss(mohn::forward(params, view1), k, bank,
                                     loss_cfg)
        .total;
  };

  constexpr double kStep = 1e-5;
  double max_rel = 0.0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto probe = [&](double& slot, double analytic) {
      const double saved = slot;
      slot = saved + kStep;
      const double hi = loss_at();
      slot = saved - kStep;
      const double lo = loss_at();
      slot = saved;
      const double fd = (hi - lo) / (2.0 * kStep);
      const double rel = std::abs(fd - analytic) /
                         std::max({1e-4, std::abs(fd), std::abs(analytic)});
      max_rel = std::max(max_rel, rel);
    };
    for (std::size_t i = 0; i < params.layers[l].weight.values.size(); ++i)
      probe(params.layers[l].weight.values[i], grads.layers[l].weight.values[i]);
    for (std::size_t i = 0; i < params.layers[l].bias.size(); ++i)
      probe(params.layers[l].bias[i], grads.layers[l].bias[i]);
  }

  std::printf("max_rel_error=%e\n", max_rel);
  const bool pass = max_rel < 1e-4;
  std::cerr << (pass ? "gradient check passed" : "gradient check FAILED")
            << " (threshold 1e-4)\n";
  return pass ? 0 : 1;
}

struct InspectArgs {
  std::string checkpoint_path;
  std::optional<std::size_t> probe;
};

int run_inspect(const InspectArgs& args) {
  const mohn::Checkpoint ckpt = mohn::load_checkpoint(args.checkpoint_path);
  if (args.probe) {
    if (*args.probe >= ckpt.bank.capacity)
      throw mohn::Error(mohn::ErrorKind::config_invalid,
                        "probe row " + std::to_string(*args.probe) +
                            " is outside the bank (capacity " +
                            std::to_string(ckpt.bank.capacity) + ")");
    const auto anchor = ckpt.bank.storage.row(*args.probe);
    std::printf("index,norm,similarity\n");
    for (std::size_t i = 0; i < ckpt.bank.capacity; ++i) {
      const auto row = ckpt.bank.storage.row(i);
      std::printf("%zu,%.12g,%.12g\n", i, mohn::l2_norm(row),
                  mohn::cosine_similarity(row, anchor));
    }
    return 0;
  }

  std::size_t param_count = 0;
  for (const auto& layer : ckpt.query.layers)
    param_count += layer.weight.values.size() + layer.bias.size();
  std::printf("step=%llu\n", static_cast<unsigned long long>(ckpt.step));
  std::printf("epoch=%llu\n", static_cast<unsigned long long>(ckpt.epoch));
  std::printf("epoch_pos=%llu\n", static_cast<unsigned long long>(ckpt.epoch_pos));
  std::printf("layers=%zu\n", ckpt.query.layers.size());
  std::printf("params=%zu\n", param_count);
  std::printf("bank_capacity=%zu\n", ckpt.bank.capacity);
  std::printf("bank_dim=%zu\n", ckpt.bank.dim);
  std::printf("bank_write_ptr=%zu\n", ckpt.bank.write_ptr);
  std::printf("bank_filled=%zu\n", ckpt.bank.filled);
  std::printf("vector_mode=%d\n", static_cast<int>(ckpt.vector_mode));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"momentum-contrast training with hard-negative filtering"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand(
      "gen-data", "Write a synthetic clustered dataset as CSV");
  gen->add_option("--classes", gen_args.classes, "Number of clusters");
  gen->add_option("--per-class", gen_args.per_class, "Items per cluster");
  gen->add_option("--dim", gen_args.dim, "Feature dimension");
  gen->add_option("--spread", gen_args.spread, "Cluster standard deviation");
  gen->add_option("--seed", gen_args.seed, "Generator seed");
  gen->add_option("--out", gen_args.out, "Output CSV path")->required();

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Run the training loop");
  train->add_option("--config", train_args.config_path, "JSON config path")
      ->required();
  train->add_option("--resume", train_args.resume_path,
                    "Checkpoint to continue from");
  std::map<std::string, std::string> override_values;
  for (const std::string& key : mohn::config_override_keys())
    train->add_option("--" + key, override_values[key],
                      "Override config key " + key);

  EvalKnnArgs eval_args;
  CLI::App* eval = app.add_subcommand(
      "eval-knn", "Score a checkpoint with the weighted nearest-neighbor vote");
  eval->add_option("--checkpoint", eval_args.checkpoint_path, "Checkpoint path")
      ->required();
  eval->add_option("--data", eval_args.data_path,
                   "Dataset path (defaults to the one in the checkpoint)");
  std::size_t eval_k = 0;
  double eval_tau = 0.0;
  CLI::Option* k_opt = eval->add_option("--k", eval_k, "Neighbor count");
  CLI::Option* tau_opt = eval->add_option("--tau", eval_tau, "Vote temperature");

  GradCheckArgs grad_args;
  CLI::App* grad = app.add_subcommand(
      "grad-check", "Compare analytic gradients against finite differences");
  grad->add_option("--seed", grad_args.seed, "Instance seed");
  grad->add_option("--dim", grad_args.dim, "Embedding dimension (max 32)");
  grad->add_option("--batch", grad_args.batch, "Batch size (max 8)");
  grad->add_option("--queue", grad_args.queue, "Bank capacity");
  grad->add_flag("--corrupt", grad_args.corrupt,
                 "Perturb one gradient entry to confirm the check can fail");

  InspectArgs inspect_args;
  CLI::App* inspect =
      app.add_subcommand("inspect", "Print checkpoint and bank summaries");
  inspect->add_option("--checkpoint", inspect_args.checkpoint_path,
                      "Checkpoint path")
      ->required();
  std::size_t probe_row = 0;
  CLI::Option* probe_opt = inspect->add_option(
      "--probe", probe_row, "Dump bank norms and similarity to this row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return run_gen_data(gen_args);
    if (train->parsed()) {
      for (const auto& [key, value] : override_values)
        if (train->count("--" + key) > 0)
          train_args.overrides.emplace_back(key, value);
      return run_train(train_args);
    }
    if (eval->parsed()) {
      if (k_opt->count() > 0) eval_args.k = eval_k;
      if (tau_opt->count() > 0) eval_args.tau = eval_tau;
      return run_eval_knn(eval_args);
    }
    if (grad->parsed()) return run_grad_check(grad_args);
    if (inspect->parsed()) {
      if (probe_opt->count() > 0) inspect_args.probe = probe_row;
      return run_inspect(inspect_args);
    }
  } catch (const mohn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
