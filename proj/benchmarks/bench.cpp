// Microbenchmarks for the pieces that dominate a training step at the
// default desk-scale shapes (batch 64, queue 512, 64-128-64 encoder).

#include <benchmark/benchmark.h>

#include <vector>

#include "mohn/encoder.hpp"
#include "mohn/eval.hpp"
#include "mohn/memory_bank.hpp"
#include "mohn/objective.hpp"
#include "mohn/rng.hpp"

namespace {

mohn::EncoderSpec default_spec() {
  mohn::EncoderSpec spec;
  spec.layer_dims = {64, 128, 64};
  return spec;
}

mohn::Matrix random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  mohn::Rng rng(seed);
  mohn::Matrix m(rows, cols);
  for (double& v : m.values) v = rng.uniform(0.0, 1.0);
  return m;
}

mohn::Matrix random_unit_rows(std::size_t rows, std::size_t cols,
                              std::uint64_t seed) {
  mohn::Rng rng(seed);
  mohn::Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = m.row(r);
    for (double& v : row) v = rng.gaussian();
    mohn::l2_normalize_in_place(row);
  }
  return m;
}

void BM_encoder_forward(benchmark::State& state) {
  const auto params = mohn::init_params(default_spec(), 1);
  const auto batch = random_batch((std::size_t)state.range(0), 64, 2);
  for (auto _ : state) {
    auto out = mohn::forward(params, batch);
    benchmark::DoNotOptimize(out.values.data());
  }
}
BENCHMARK(BM_encoder_forward)->Arg(64)->Arg(256);

void BM_encoder_backward(benchmark::State& state) {
  const auto params = mohn::init_params(default_spec(), 1);
  const auto batch = random_batch((std::size_t)state.range(0), 64, 2);
  mohn::ForwardCache cache;
  mohn::forward(params, batch, &cache);
  const auto grad_out = random_batch((std::size_t)state.range(0), 64, 3);
  for (auto _ : state) {
    auto grads = mohn::backward(params, cache, grad_out);
    benchmark::DoNotOptimize(grads.layers.data());
  }
}
BENCHMARK(BM_encoder_backward)->Arg(64)->Arg(256);

void BM_filtered_loss(benchmark::State& state) {
  const auto bank = mohn::init_bank((std::size_t)state.range(0), 64, 4);
  const auto q = random_unit_rows(64, 64, 5);
  const auto k = random_unit_rows(64, 64, 6);
  const mohn::LossConfig cfg;
  for (auto _ : state) {
    auto out = mohn::batch_filtered_loss(q, k, bank, cfg);
    benchmark::DoNotOptimize(out.total);
  }
}
BENCHMARK(BM_filtered_loss)->Arg(512)->Arg(4096);

void BM_select_hard_negatives(benchmark::State& state) {
  const auto bank = mohn::init_bank((std::size_t)state.range(0), 64, 7);
  const auto anchors = random_unit_rows(1, 64, 8);
  const std::size_t f_n = (std::size_t)state.range(0) / 5;
  for (auto _ : state) {
    auto sel = mohn::select_hard_negatives(bank, anchors.row(0), f_n,
                                           mohn::SelectionBasis::query);
    benchmark::DoNotOptimize(sel.indices.data());
  }
}
BENCHMARK(BM_select_hard_negatives)->Arg(512)->Arg(4096);

void BM_enqueue(benchmark::State& state) {
  auto bank = mohn::init_bank(512, 64, 9);
  const auto keys = random_unit_rows(64, 64, 10);
  for (auto _ : state) {
    mohn::enqueue(bank, keys);
    benchmark::DoNotOptimize(bank.write_ptr);
  }
}
BENCHMARK(BM_enqueue);

void BM_knn_predict(benchmark::State& state) {
  const std::size_t n = (std::size_t)state.range(0);
  mohn::EmbeddingIndex index;
  index.embeddings = random_unit_rows(n, 64, 11);
  mohn::Rng rng(12);
  for (std::size_t i = 0; i < n; ++i)
    index.labels.push_back((int)rng.below(10));
  const auto queries = random_unit_rows(1, 64, 13);
  mohn::KnnConfig cfg;
  cfg.neighbors = 200;
  for (auto _ : state) {
    int cls = mohn::knn_predict(index, queries.row(0), cfg);
    benchmark::DoNotOptimize(cls);
  }
}
BENCHMARK(BM_knn_predict)->Arg(900)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
