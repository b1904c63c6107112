#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mohn/checkpoint.hpp"
#include "mohn/config.hpp"
#include "mohn/error.hpp"
#include "mohn/trainer.hpp"
#include "test_util.hpp"

using mohn::Checkpoint;
using mohn::Dataset;
using mohn::EncoderParams;
using mohn::ErrorKind;
using mohn::Matrix;
using mohn::SplitDataset;
using mohn::TrainConfig;
using mohn::TrainState;
using test_util::TempDir;

namespace {

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const mohn::Error& e) {
    return e.kind();
  }
  return static_cast<ErrorKind>(255);
}

template <typename Fn>
std::string message_of(Fn&& fn) {
  try {
    fn();
  } catch (const mohn::Error& e) {
    return e.what();
  }
  return "";
}

// Small but complete configuration for fast in-memory runs.
TrainConfig small_config(const std::string& out_dir) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 10;
  cfg.queue_capacity = 40;
  cfg.eval_interval = 0;
  cfg.encoder.layer_dims = {8, 16, 8};
  cfg.data.path = "unused.csv";
  cfg.output_dir = out_dir;
  cfg.knn.neighbors = 20;
  return cfg;
}

SplitDataset small_split(std::uint64_t seed) {
  const Dataset data = mohn::gen_clusters(5, 24, 8, 0.2, seed);
  return mohn::split_holdout(data, 0.1, seed);  // 108 train, 12 test
}

EncoderParams identity_2x2() {
  EncoderParams p;
  p.spec.layer_dims = {2, 2};
  p.layers.resize(1);
  p.layers[0].weight = Matrix(2, 2, {1, 0, 0, 1});
  p.layers[0].bias = {0, 0};
  return p;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

double loss_of(const std::string& csv_row) {
  // step,epoch,loss,...
  std::istringstream in(csv_row);
  std::string field;
  std::getline(in, field, ',');
  std::getline(in, field, ',');
  std::getline(in, field, ',');
  return std::stod(field);
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("sgd_step frozen updates") {
  EncoderParams p = identity_2x2();
  mohn::EncoderGrads g;
  g.layers.resize(1);
  g.layers[0].weight = Matrix(2, 2, {0.5, 0, 0, 0});
  g.layers[0].bias = {0, 0};
  auto opt = mohn::init_optimizer_state(p);

  // v = 0.9 * 0 + (0.5 + 0) = 0.5; theta = 1 - 0.1 * 0.5 = 0.95
  mohn::sgd_step(p, g, opt, 0.1, 0.9, 0.0);
  CHECK(p.layers[0].weight.at(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(opt.velocity[0].weight.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  // Momentum carries: v = 0.9 * 0.5 + 0.5 = 0.95; theta = 0.95 - 0.095
  mohn::sgd_step(p, g, opt, 0.1, 0.9, 0.0);
  CHECK(p.layers[0].weight.at(0, 0) == doctest::Approx(0.855).epsilon(1e-14));

  // Weight decay alone: v = 0 + 0.1 * 1 = 0.1; theta = 1 - 0.1 * 0.1 = 0.99
  EncoderParams q = identity_2x2();
  mohn::EncoderGrads zero;
  zero.layers.resize(1);
  zero.layers[0].weight = Matrix(2, 2);
  zero.layers[0].bias = {0, 0};
  auto opt2 = mohn::init_optimizer_state(q);
  mohn::sgd_step(q, zero, opt2, 0.1, 0.0, 0.1);
  CHECK(q.layers[0].weight.at(0, 0) == doctest::Approx(0.99).epsilon(1e-15));
  // Zero gradient, zero decay: parameters hold still.
  EncoderParams r = identity_2x2();
  auto opt3 = mohn::init_optimizer_state(r);
  mohn::sgd_step(r, zero, opt3, 0.1, 0.9, 0.0);
  CHECK(r.layers[0].weight.values == identity_2x2().layers[0].weight.values);

  mohn::EncoderGrads wrong;
  wrong.layers.resize(2);
  CHECK(kind_of([&] { mohn::sgd_step(p, wrong, opt, 0.1, 0.9, 0.0); }) ==
        ErrorKind::shape_mismatch);
}

TEST_CASE("shuffle_batch and unshuffle_batch are inverse") {
  mohn::Rng rng(3);
  for (const std::size_t rows : {1, 2, 7, 32}) {
    Matrix batch(rows, 5);
    for (double& v : batch.values) v = rng.uniform(-1.0, 1.0);
    auto [shuffled, perm] = mohn::shuffle_batch(batch, rng);
    REQUIRE(perm.size() == rows);
    // shuffled row i must be batch row perm[i]
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t c = 0; c < 5; ++c)
        CHECK(shuffled.at(i, c) == batch.at(perm[i], c));
    const Matrix back = mohn::unshuffle_batch(shuffled, perm);
    CHECK(back.values == batch.values);
  }

  // A single row cannot move.
  Matrix one(1, 3, {1, 2, 3});
  auto [s, p] = mohn::shuffle_batch(one, rng);
  CHECK(s.values == one.values);
  CHECK(p == std::vector<std::size_t>{0});

  CHECK(kind_of([&] { mohn::shuffle_batch(Matrix(0, 3), rng); }) ==
        ErrorKind::empty_batch);
  CHECK(kind_of([&] { mohn::unshuffle_batch(one, {0, 1}); }) ==
        ErrorKind::shape_mismatch);
  CHECK(kind_of([&] { mohn::unshuffle_batch(one, {5}); }) ==
        ErrorKind::shape_mismatch);
}

TEST_CASE("holdout split is disjoint, stable, seeded") {
  const Dataset data = mohn::gen_clusters(4, 25, 6, 0.2, 9);
  const auto split = mohn::split_holdout(data, 0.1, 9);
  CHECK(split.train.size() == 90);
  CHECK(split.test.size() == 10);
  CHECK(split.train.class_count == 4);
  CHECK(split.test.split == mohn::Split::test);

  // Re-splitting gives the same assignment.
  const auto again = mohn::split_holdout(data, 0.1, 9);
  CHECK(split.test.labels == again.test.labels);
  for (std::size_t i = 0; i < split.test.size(); ++i)
    CHECK(split.test.images[i].values == again.test.images[i].values);
  const auto other = mohn::split_holdout(data, 0.1, 10);
  bool same = split.test.labels == other.test.labels;
  if (same)
    for (std::size_t i = 0; i < split.test.size(); ++i)
      same = same && split.test.images[i].values == other.test.images[i].values;
  CHECK_FALSE(same);

  // Stable order: the train side preserves the original relative order,
  // so walking data and skipping test items reproduces it.
  std::size_t ti = 0, si = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (ti < split.test.size() &&
        data.images[i].values == split.test.images[ti].values &&
        data.labels[i] == split.test.labels[ti]) {
      ++ti;
      continue;
    }
    REQUIRE(si < split.train.size());
    CHECK(data.labels[i] == split.train.labels[si]);
    ++si;
  }
  CHECK(ti == split.test.size());
  CHECK(si == split.train.size());

  // Extreme fractions clamp to leave at least one item per side.
  const auto extreme = mohn::split_holdout(data, 0.999, 3);
  CHECK(extreme.train.size() == 1);
  CHECK(extreme.test.size() == 99);

  CHECK(kind_of([&] { mohn::split_holdout(data, 0.0, 1); }) ==
        ErrorKind::config_invalid);
  CHECK(kind_of([&] { mohn::split_holdout(data, 1.0, 1); }) ==
        ErrorKind::config_invalid);
  Dataset tiny;
  tiny.images.push_back(data.images[0]);
  tiny.labels.push_back(0);
  tiny.class_count = 1;
  CHECK(kind_of([&] { mohn::split_holdout(tiny, 0.5, 1); }) == ErrorKind::empty_input);
}

TEST_CASE("load_split dispatches on data kind") {
  TempDir tmp;
  const Dataset data = mohn::gen_clusters(3, 10, 4, 0.2, 21);
  const auto csv = tmp.path() / "d.csv";
  mohn::write_dataset_csv(data, csv);

  mohn::DataConfig cfg;
  cfg.kind = "csv";
  cfg.path = csv.string();
  cfg.holdout_fraction = 0.2;
  const auto split = mohn::load_split(cfg, 5);
  CHECK(split.train.size() + split.test.size() == 30);
  CHECK(split.test.size() == 6);

  mohn::DataConfig missing = cfg;
  missing.path = (tmp.path() / "absent.csv").string();
  CHECK(kind_of([&] { mohn::load_split(missing, 5); }) == ErrorKind::missing_file);

  mohn::DataConfig bogus = cfg;
  bogus.kind = "parquet";
  CHECK(kind_of([&] { mohn::load_split(bogus, 5); }) == ErrorKind::config_invalid);
}

TEST_CASE("one hand-checked training step") {
  // Identity encoder on 2d inputs, a bank holding [0,1] and [-1,0], and a
  // batch of one row [1,0] in both views.  The embeddings are then exactly
  // q = k = [1,0], whose filtered dual-view loss at temperature 1,
  // view weight 1/2, hard fraction 1/2 is 0.2672670 (query term
  // log(1 + 1/e + 1/e^2), key term log(1 + 1/e^2), averaged).
  TrainState state;
  state.config = small_config("unused");
  state.config.batch_size = 1;
  state.config.queue_capacity = 2;
  state.config.encoder.layer_dims = {2, 2};
  state.config.loss.temperature = 1.0;
  state.config.loss.view_weight = 0.5;
  state.config.loss.hard_fraction = 0.5;
  state.encoders.query = identity_2x2();
  state.encoders.key = identity_2x2();
  state.encoders.momentum_coefficient = 0.99;
  state.optimizer = mohn::init_optimizer_state(state.encoders.query);
  state.bank.capacity = 2;
  state.bank.dim = 2;
  state.bank.storage = Matrix(2, 2, {0, 1, -1, 0});
  state.bank.filled = 2;
  state.loop_rng = mohn::Rng(1);

  const Matrix view(1, 2, {1, 0});
  const auto before = state.loop_rng.state();
  const auto metrics = mohn::train_step(state, view, view);

  CHECK(metrics.loss == doctest::Approx(0.2672669877436765).epsilon(1e-12));
  CHECK(std::abs(metrics.loss - 0.2672670) < 1e-6);
  CHECK(metrics.query_term == doctest::Approx(0.4076059644443804).epsilon(1e-12));
  CHECK(metrics.key_term == doctest::Approx(0.1269280110429726).epsilon(1e-12));
  CHECK(metrics.step == 1);
  CHECK(metrics.epoch == 1);
  CHECK(state.step == 1);

  // The key embedding [1,0] was enqueued at slot 0.
  CHECK(metrics.queue_ptr == 1);
  CHECK(state.bank.write_ptr == 1);
  CHECK(state.bank.storage.at(0, 0) == doctest::Approx(1.0));
  CHECK(state.bank.storage.at(0, 1) == doctest::Approx(0.0));
  // Row 1 untouched.
  CHECK(state.bank.storage.at(1, 0) == -1.0);

  // A batch of one has nothing to shuffle, so the loop rng is untouched.
  CHECK(state.loop_rng.state() == before);

  // The loss gradient is nonzero, so SGD must have moved the query encoder.
  CHECK(state.encoders.query.layers[0].weight.values !=
        identity_2x2().layers[0].weight.values);
}

TEST_CASE("key encoder changes only through the momentum blend") {
  auto cfg = small_config("unused");
  const auto split = small_split(31);
  auto state = mohn::init_train_state(cfg, split);

  mohn::Rng noise(7);
  for (int step = 0; step < 5; ++step) {
    Matrix v1(cfg.batch_size, 8), v2(cfg.batch_size, 8);
    for (double& v : v1.values) v = noise.uniform(0.0, 1.0);
    for (double& v : v2.values) v = noise.uniform(0.0, 1.0);

    const auto key_before = state.encoders.key;
    mohn::train_step(state, v1, v2);
    const double m = cfg.momentum_coefficient;
    for (std::size_t l = 0; l < key_before.layers.size(); ++l) {
      const auto& prev = key_before.layers[l];
      const auto& query = state.encoders.query.layers[l];
      const auto& now = state.encoders.key.layers[l];
      for (std::size_t i = 0; i < prev.weight.values.size(); ++i)
        REQUIRE(now.weight.values[i] ==
                m * prev.weight.values[i] + (1.0 - m) * query.weight.values[i]);
      for (std::size_t i = 0; i < prev.bias.size(); ++i)
        REQUIRE(now.bias[i] == m * prev.bias[i] + (1.0 - m) * query.bias[i]);
    }
  }
}

TEST_CASE("momentum one freezes the key encoder for a whole run") {
  auto cfg = small_config("unused");
  cfg.momentum_coefficient = 1.0;
  const auto split = small_split(33);
  auto state = mohn::init_train_state(cfg, split);
  const auto frozen = state.encoders.key;

  mohn::Rng noise(8);
  for (int step = 0; step < 4; ++step) {
    Matrix v1(cfg.batch_size, 8), v2(cfg.batch_size, 8);
    for (double& v : v1.values) v = noise.uniform(0.0, 1.0);
    for (double& v : v2.values) v = noise.uniform(0.0, 1.0);
    mohn::train_step(state, v1, v2);
  }
  for (std::size_t l = 0; l < frozen.layers.size(); ++l) {
    CHECK(state.encoders.key.layers[l].weight.values ==
          frozen.layers[l].weight.values);
    CHECK(state.encoders.key.layers[l].bias == frozen.layers[l].bias);
  }
}

TEST_CASE("key weights stay inside the envelope of past query weights") {
  auto cfg = small_config("unused");
  const auto split = small_split(35);
  auto state = mohn::init_train_state(cfg, split);

  const std::size_t n = state.encoders.key.layers[0].weight.values.size();
  std::vector<double> lo(state.encoders.key.layers[0].weight.values);
  std::vector<double> hi(lo);

  mohn::Rng noise(9);
  for (int step = 0; step < 20; ++step) {
    Matrix v1(cfg.batch_size, 8), v2(cfg.batch_size, 8);
    for (double& v : v1.values) v = noise.uniform(0.0, 1.0);
    for (double& v : v2.values) v = noise.uniform(0.0, 1.0);
    mohn::train_step(state, v1, v2);
    const auto& query = state.encoders.query.layers[0].weight.values;
    const auto& key = state.encoders.key.layers[0].weight.values;
    for (std::size_t i = 0; i < n; ++i) {
      lo[i] = std::min(lo[i], query[i]);
      hi[i] = std::max(hi[i], query[i]);
      REQUIRE(key[i] >= lo[i] - 1e-12);
      REQUIRE(key[i] <= hi[i] + 1e-12);
    }
  }
}

TEST_CASE("training on clustered data reduces the loss") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    TempDir tmp;
    TrainConfig cfg = small_config(tmp.str("run"));
    cfg.seed = seed;
    cfg.epochs = 10;
    cfg.batch_size = 12;
    cfg.queue_capacity = 48;
    cfg.encoder.layer_dims = {16, 32, 16};
    const Dataset data = mohn::gen_clusters(6, 40, 16, 0.1, seed);
    const auto split = mohn::split_holdout(data, 0.1, seed);

    const auto result = mohn::train_on(cfg, split);
    const auto rows = lines_of(test_util::read_file(result.metrics_path));
    REQUIRE(rows.size() >= 21);
    const std::size_t steps = rows.size() - 1;
    const std::size_t window = steps / 5;
    double early = 0.0, late = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
      early += loss_of(rows[1 + i]);
      late += loss_of(rows[rows.size() - window + i]);
    }
    CAPTURE(seed);
    CAPTURE(early);
    CAPTURE(late);
    CHECK(late < early);
  }
}

TEST_CASE("identical configs produce byte-identical metrics") {
  TempDir tmp;
  TrainConfig a = small_config(tmp.str("a"));
  a.eval_interval = 10;
  TrainConfig b = a;
  b.output_dir = tmp.str("b");
  const auto split = small_split(37);

  const auto ra = mohn::train_on(a, split);
  const auto rb = mohn::train_on(b, split);
  const std::string ma = test_util::read_file(ra.metrics_path);
  CHECK(ma == test_util::read_file(rb.metrics_path));
  CHECK(ma.size() > 0);
  REQUIRE(ra.final_knn.has_value());
  REQUIRE(rb.final_knn.has_value());
  CHECK(*ra.final_knn == *rb.final_knn);
}

TEST_CASE("metrics file layout") {
  TempDir tmp;
  TrainConfig cfg = small_config(tmp.str("run"));
  cfg.eval_interval = 7;  // fires at 7, 14, and the final step 20
  const auto split = small_split(39);
  const auto result = mohn::train_on(cfg, split);

  const auto rows = lines_of(test_util::read_file(result.metrics_path));
  REQUIRE(rows.size() == 21);  // header + 2 epochs x 10 steps
  CHECK(rows[0] ==
        "step,epoch,loss,loss_query_term,loss_key_term,lr,queue_ptr,knn_top1");
  // Row 1 is step 1 of epoch 1; no evaluation, so the line ends with a comma.
  CHECK(rows[1].substr(0, 4) == "1,1,");
  CHECK(rows[1].back() == ',');
  // Step 7 carries a knn column formatted with four decimals.
  const std::string& eval_row = rows[7];
  const auto last_comma = eval_row.rfind(',');
  const std::string knn = eval_row.substr(last_comma + 1);
  REQUIRE(knn.size() == 6);
  CHECK(knn[1] == '.');
  // Final step evaluates even though 20 % 7 != 0.
  CHECK(rows[20].back() != ',');
  // Epoch rolls over between steps 10 and 11.
  CHECK(rows[10].substr(0, 5) == "10,1,");
  CHECK(rows[11].substr(0, 5) == "11,2,");
}

TEST_CASE("zero epochs still writes the header and a final checkpoint") {
  TempDir tmp;
  TrainConfig cfg = small_config(tmp.str("run"));
  cfg.epochs = 0;
  const auto split = small_split(41);
  const auto result = mohn::train_on(cfg, split);
  CHECK(result.steps == 0);
  const auto rows = lines_of(test_util::read_file(result.metrics_path));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].substr(0, 5) == "step,");
  const Checkpoint ckpt = mohn::load_checkpoint(result.checkpoint_path);
  CHECK(ckpt.step == 0);
  CHECK(ckpt.permutation.empty());
}

TEST_CASE("checkpoint round-trips every field") {
  TempDir tmp;
  TrainConfig cfg = small_config(tmp.str("run"));
  const auto split = small_split(43);
  const auto result = mohn::train_on(cfg, split);

  const Checkpoint ckpt = mohn::load_checkpoint(result.checkpoint_path);
  CHECK(ckpt.step == 20);
  CHECK(ckpt.epoch == 2);
  CHECK(ckpt.epoch_pos == 0);
  CHECK(ckpt.permutation.empty());
  CHECK(ckpt.vector_mode == 1);
  CHECK(ckpt.feature_mean.size() == 8);
  CHECK(ckpt.feature_std.size() == 8);
  CHECK(ckpt.bank.capacity == 40);
  CHECK(ckpt.bank.dim == 8);
  CHECK(serialize_train_config(ckpt.config) == serialize_train_config(cfg));

  // The writer is canonical: saving the loaded state reproduces the file.
  const auto copy = tmp.path() / "copy.mohn";
  mohn::save_checkpoint(ckpt, copy);
  CHECK(test_util::read_file(copy) == test_util::read_file(result.checkpoint_path));

  // Restoring from it yields the exact same tensors.
  const auto state = mohn::restore_train_state(cfg, ckpt);
  CHECK(state.step == 20);
  for (std::size_t l = 0; l < ckpt.query.layers.size(); ++l) {
    CHECK(state.encoders.query.layers[l].weight.values ==
          ckpt.query.layers[l].weight.values);
    CHECK(state.encoders.key.layers[l].weight.values ==
          ckpt.key.layers[l].weight.values);
    CHECK(state.optimizer.velocity[l].weight.values ==
          ckpt.velocity[l].weight.values);
  }
  CHECK(state.bank.storage.values == ckpt.bank.storage.values);
  CHECK(state.loop_rng.state() == ckpt.rng_state);
}

TEST_CASE("checkpoint loader rejects damage") {
  TempDir tmp;
  TrainConfig cfg = small_config(tmp.str("run"));
  cfg.epochs = 1;
  const auto split = small_split(45);
  const auto result = mohn::train_on(cfg, split);
  const std::string good = test_util::read_file(result.checkpoint_path);
  REQUIRE(good.size() > 64);

  CHECK(kind_of([&] { mohn::load_checkpoint(tmp.path() / "absent.mohn"); }) ==
        ErrorKind::missing_file);

  auto reload = [&](const std::string& bytes) {
    const auto p = tmp.path() / "tampered.mohn";
    test_util::write_file(p, bytes);
    return mohn::load_checkpoint(p);
  };

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(kind_of([&] { reload(bad_magic); }) == ErrorKind::corrupt_checkpoint);

  std::string bad_version = good;
  bad_version[4] = (char)(bad_version[4] + 1);
  CHECK(kind_of([&] { reload(bad_version); }) == ErrorKind::version_mismatch);

  // A flipped payload byte must fail the section checksum.
  std::string flipped = good;
  flipped[40] = (char)(flipped[40] ^ 0x5a);
  CHECK(kind_of([&] { reload(flipped); }) == ErrorKind::corrupt_checkpoint);

  std::string truncated = good.substr(0, good.size() / 2);
  CHECK(kind_of([&] { reload(truncated); }) == ErrorKind::corrupt_checkpoint);
  std::string tiny = good.substr(0, 3);
  CHECK(kind_of([&] { reload(tiny); }) == ErrorKind::corrupt_checkpoint);
}

TEST_CASE("resume reproduces the unbroken run byte for byte") {
  TempDir tmp;
  // 10 steps per epoch; the interrupted run stops at step 20, which the
  // eval interval divides, so the eval column pattern lines up too.
  TrainConfig full = small_config(tmp.str("full"));
  full.epochs = 4;
  full.eval_interval = 10;
  const auto split = small_split(47);
  const auto unbroken = mohn::train_on(full, split);

  TrainConfig half = full;
  half.epochs = 2;
  half.output_dir = tmp.str("resumed");
  const auto first_leg = mohn::train_on(half, split);

  TrainConfig extended = half;
  extended.epochs = 4;
  const Checkpoint ckpt = mohn::load_checkpoint(first_leg.checkpoint_path);
  const auto second_leg = mohn::resume_on(extended, split, ckpt);

  CHECK(second_leg.steps == 40);
  CHECK(test_util::read_file(second_leg.metrics_path) ==
        test_util::read_file(unbroken.metrics_path));

  // Resuming into a fresh directory writes header plus the new rows only,
  // and they must equal the tail of the unbroken file.
  TrainConfig moved = extended;
  moved.output_dir = tmp.str("fresh");
  const auto third_leg = mohn::resume_on(moved, split, ckpt);
  const auto fresh_rows = lines_of(test_util::read_file(third_leg.metrics_path));
  const auto full_rows = lines_of(test_util::read_file(unbroken.metrics_path));
  REQUIRE(fresh_rows.size() == 21);  // header + steps 21..40
  REQUIRE(full_rows.size() == 41);
  CHECK(fresh_rows[0] == full_rows[0]);
  for (std::size_t i = 1; i < fresh_rows.size(); ++i)
    CHECK(fresh_rows[i] == full_rows[20 + i]);
}

TEST_CASE("resume rejects a config describing a different run") {
  TempDir tmp;
  TrainConfig cfg = small_config(tmp.str("run"));
  cfg.epochs = 1;
  const auto split = small_split(49);
  const auto result = mohn::train_on(cfg, split);
  const Checkpoint ckpt = mohn::load_checkpoint(result.checkpoint_path);

  TrainConfig reseeded = cfg;
  reseeded.seed = 2;
  CHECK(kind_of([&] { mohn::resume_on(reseeded, split, ckpt); }) ==
        ErrorKind::config_invalid);

  TrainConfig retuned = cfg;
  retuned.loss.temperature = 0.5;
  CHECK(kind_of([&] { mohn::resume_on(retuned, split, ckpt); }) ==
        ErrorKind::config_invalid);

  // Run-control knobs may change freely.
  TrainConfig extended = cfg;
  extended.epochs = 2;
  extended.eval_interval = 5;
  extended.checkpoint_interval = 5;
  extended.output_dir = tmp.str("elsewhere");
  CHECK_NOTHROW(mohn::resume_on(extended, split, ckpt));
}

TEST_CASE("periodic checkpoints appear at the configured cadence") {
  TempDir tmp;
  TrainConfig cfg = small_config(tmp.str("run"));
  cfg.checkpoint_interval = 8;
  const auto split = small_split(51);
  mohn::train_on(cfg, split);
  CHECK(std::filesystem::exists(tmp.path() / "run" / "checkpoint_8.mohn"));
  CHECK(std::filesystem::exists(tmp.path() / "run" / "checkpoint_16.mohn"));
  CHECK(std::filesystem::exists(tmp.path() / "run" / "checkpoint_final.mohn"));
  // Step 20 is final, so no checkpoint_20 alongside the final one, and the
  // intermediate file is itself a loadable checkpoint.
  CHECK_FALSE(std::filesystem::exists(tmp.path() / "run" / "checkpoint_20.mohn"));
  const Checkpoint mid = mohn::load_checkpoint(tmp.path() / "run" / "checkpoint_8.mohn");
  CHECK(mid.step == 8);
  CHECK(mid.epoch == 0);
  CHECK(mid.epoch_pos == 8);
  // The in-flight permutation spans the whole training split.
  CHECK(mid.permutation.size() == 108);
}

TEST_CASE("init_train_state validates config against data") {
  const auto split = small_split(53);
  TrainConfig cfg = small_config("unused");

  TrainConfig wrong_dim = cfg;
  wrong_dim.encoder.layer_dims = {9, 16, 8};
  CHECK(kind_of([&] { mohn::init_train_state(wrong_dim, split); }) ==
        ErrorKind::dimension_mismatch);

  TrainConfig big_batch = cfg;
  big_batch.batch_size = 500;
  big_batch.queue_capacity = 500;
  CHECK(kind_of([&] { mohn::init_train_state(big_batch, split); }) ==
        ErrorKind::config_invalid);

  TrainConfig ragged_queue = cfg;
  ragged_queue.queue_capacity = 45;
  CHECK(kind_of([&] { mohn::init_train_state(ragged_queue, split); }) ==
        ErrorKind::config_invalid);

  SplitDataset empty;
  CHECK(kind_of([&] { mohn::init_train_state(cfg, empty); }) ==
        ErrorKind::empty_input);

  // Feature vectors resolve to vector-mode augmentation with stats.
  const auto state = mohn::init_train_state(cfg, split);
  CHECK(state.policy.mode == mohn::AugmentMode::vector_features);
  CHECK(state.policy.channel_mean.size() == 8);
  CHECK(state.policy.channel_std.size() == 8);
  CHECK(state.bank.capacity == 40);
  CHECK(state.step == 0);
}

TEST_CASE("evaluate_knn clamps oversized neighbor counts") {
  const auto split = small_split(55);  // 108 train items
  TrainConfig cfg = small_config("unused");
  cfg.knn.neighbors = 500;
  auto state = mohn::init_train_state(cfg, split);

  std::vector<std::string> log;
  mohn::TrainSinks sinks;
  sinks.info = [&](const std::string& line) { log.push_back(line); };
  const double acc = mohn::evaluate_knn(state, split, sinks);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  bool mentioned = false;
  for (const auto& line : log)
    mentioned = mentioned || line.find("clamped") != std::string::npos;
  CHECK(mentioned);
}

TEST_CASE("config text parsing, defaults, and overrides") {
  // Parsing validates, and a config is only valid with a dataset path.
  const TrainConfig defaults =
      mohn::parse_train_config_text(R"({"data": {"path": "x.csv"}})");
  CHECK(defaults.learning_rate == 0.01);
  CHECK(defaults.batch_size == 64);
  CHECK(defaults.queue_capacity == 512);
  CHECK(defaults.momentum_coefficient == 0.99);
  CHECK(defaults.loss.temperature == 0.2);
  CHECK(defaults.loss.view_weight == 0.1);
  CHECK(defaults.loss.hard_fraction == 0.2);
  CHECK(defaults.encoder.layer_dims == std::vector<std::size_t>{64, 128, 64});
  CHECK(defaults.knn.neighbors == 200);
  CHECK(defaults.knn.temperature == 0.1);

  // Serialization is canonical and round-trips.
  const std::string text = mohn::serialize_train_config(defaults);
  const TrainConfig back = mohn::parse_train_config_text(text);
  CHECK(mohn::serialize_train_config(back) == text);
  CHECK(mohn::same_run_identity(defaults, back));

  const TrainConfig custom = mohn::parse_train_config_text(
      R"({"epochs": 3, "loss": {"temperature": 0.5},
          "encoder": {"activation": "tanh"}, "data": {"path": "x.csv"}})");
  CHECK(custom.epochs == 3);
  CHECK(custom.loss.temperature == 0.5);
  CHECK(custom.encoder.activation == mohn::Activation::tanh);
  CHECK(custom.batch_size == 64);  // untouched default

  const TrainConfig overridden = mohn::parse_train_config_text(
      "{}", {{"epochs", "5"},
             {"loss.temperature", "0.4"},
             {"data.path", "some/file.csv"},
             {"encoder.layer_dims", "[4, 8]"}});
  CHECK(overridden.epochs == 5);
  CHECK(overridden.loss.temperature == 0.4);
  CHECK(overridden.data.path == "some/file.csv");
  CHECK(overridden.encoder.layer_dims == std::vector<std::size_t>{4, 8});
}

TEST_CASE("config parsing rejects unknown keys by name") {
  CHECK(message_of([] { mohn::parse_train_config_text(R"({"learning_rat": 0.1})"); })
            .find("learning_rat") != std::string::npos);
  CHECK(message_of([] {
          mohn::parse_train_config_text(R"({"loss": {"temp": 0.1}})");
        }).find("loss.temp") != std::string::npos);
  CHECK(kind_of([] { mohn::parse_train_config_text(R"({"learning_rat": 0.1})"); }) ==
        ErrorKind::config_invalid);
  CHECK(kind_of([] { mohn::parse_train_config_text("not json"); }) ==
        ErrorKind::config_invalid);
  CHECK(kind_of([] { mohn::parse_train_config_text(R"([1, 2])"); }) ==
        ErrorKind::config_invalid);

  // Bad override values and paths.
  CHECK(kind_of([] { mohn::parse_train_config_text("{}", {{"epochs", "abc"}}); }) ==
        ErrorKind::config_invalid);
  CHECK(kind_of([] { mohn::parse_train_config_text("{}", {{"loss", "{}"}}); }) ==
        ErrorKind::config_invalid);
  CHECK(kind_of([] { mohn::parse_train_config_text("{}", {{"no.such.key", "1"}}); }) ==
        ErrorKind::config_invalid);
  CHECK(kind_of([] { mohn::parse_train_config_text("{}", {{"epochs", "-3"}}); }) ==
        ErrorKind::config_invalid);
}

TEST_CASE("config validation catches inconsistent values") {
  const auto base = mohn::parse_train_config_text(R"({"data": {"path": "x.csv"}})");
  CHECK_NOTHROW(mohn::validate(base));

  auto bad = base;
  bad.learning_rate = 0.0;
  CHECK(kind_of([&] { mohn::validate(bad); }) == ErrorKind::config_invalid);
  bad = base;
  bad.sgd_momentum = 1.0;
  CHECK(kind_of([&] { mohn::validate(bad); }) == ErrorKind::config_invalid);
  bad = base;
  bad.queue_capacity = 100;  // not a multiple of 64
  CHECK(kind_of([&] { mohn::validate(bad); }) == ErrorKind::config_invalid);
  bad = base;
  bad.momentum_coefficient = 1.5;
  CHECK(kind_of([&] { mohn::validate(bad); }) == ErrorKind::config_invalid);
  bad = base;
  bad.data.kind = "parquet";
  CHECK(kind_of([&] { mohn::validate(bad); }) == ErrorKind::config_invalid);
  bad = base;
  bad.data.holdout_fraction = 0.0;
  CHECK(kind_of([&] { mohn::validate(bad); }) == ErrorKind::config_invalid);
  bad = base;
  bad.data.path = "";
  CHECK(kind_of([&] { mohn::validate(bad); }) == ErrorKind::config_invalid);
  bad = base;
  bad.output_dir = "";
  CHECK(kind_of([&] { mohn::validate(bad); }) == ErrorKind::config_invalid);
}

TEST_CASE("run identity ignores run-control knobs only") {
  const auto base = mohn::parse_train_config_text(R"({"data": {"path": "x.csv"}})");
  auto other = base;
  other.output_dir = "somewhere/else";
  other.epochs = 99;
  other.eval_interval = 1;
  other.checkpoint_interval = 3;
  CHECK(mohn::same_run_identity(base, other));

  auto different = base;
  different.seed = 2;
  CHECK_FALSE(mohn::same_run_identity(base, different));
  different = base;
  different.learning_rate = 0.02;
  CHECK_FALSE(mohn::same_run_identity(base, different));
  different = base;
  different.loss.temperature = 0.21;
  CHECK_FALSE(mohn::same_run_identity(base, different));
  different = base;
  different.encoder.layer_dims = {64, 64};
  CHECK_FALSE(mohn::same_run_identity(base, different));
  different = base;
  different.augment.blur_prob = 0.9;
  CHECK_FALSE(mohn::same_run_identity(base, different));
}

TEST_CASE("override keys cover the dotted config surface") {
  const auto keys = mohn::config_override_keys();
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  auto has = [&](const std::string& k) {
    return std::find(keys.begin(), keys.end(), k) != keys.end();
  };
  CHECK(has("learning_rate"));
  CHECK(has("epochs"));
  CHECK(has("seed"));
  CHECK(has("output_dir"));
  CHECK(has("loss.temperature"));
  CHECK(has("loss.view_weight"));
  CHECK(has("loss.hard_fraction"));
  CHECK(has("encoder.layer_dims"));
  CHECK(has("data.path"));
  CHECK(has("augment.blur_prob"));
  CHECK(has("knn.neighbors"));
  CHECK_FALSE(has("loss"));
}

}  // TEST_SUITE
