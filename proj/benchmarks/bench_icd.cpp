#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "apl/icd.hpp"
#include "apl/rng.hpp"

namespace {

constexpr std::size_t kDim = 32;

apl::InstanceFeature random_instance(std::size_t frames, std::size_t cls,
                                     apl::Rng& rng) {
  apl::InstanceFeature f;
  f.features = apl::Matrix(kDim, frames);
  for (std::size_t d = 0; d < kDim; ++d)
    for (std::size_t t = 0; t < frames; ++t) f.features(d, t) = rng.normal(0.0, 1.0);
  f.class_index = cls;
  f.video_id = "bench";
  return f;
}

std::vector<apl::InstanceFeature> random_batch(std::size_t n, std::uint64_t seed) {
  apl::Rng rng(seed);
  std::vector<apl::InstanceFeature> batch;
  batch.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    batch.push_back(random_instance(4 + i % 9, i % 5, rng));
  return batch;
}

apl::DiscriminatorModel random_model(std::size_t hidden, std::uint64_t seed) {
  apl::Rng rng(seed);
  apl::DiscriminatorModel m;
  m.w1 = apl::Matrix(hidden, 2 * kDim);
  m.b1.assign(hidden, 0.0);
  m.w2.assign(hidden, 0.0);
  for (std::size_t h = 0; h < hidden; ++h) {
    for (std::size_t c = 0; c < 2 * kDim; ++c) m.w1(h, c) = rng.normal(0.0, 0.2);
    m.w2[h] = rng.normal(0.0, 0.2);
  }
  return m;
}

}  // namespace

static void BM_MaxPool(benchmark::State& state) {
  apl::Rng rng(3);
  const auto feat =
      random_instance(static_cast<std::size_t>(state.range(0)), 0, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::max_pool(feat));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * kDim);
}
BENCHMARK(BM_MaxPool)->Range(4, 256);

static void BM_PairProbability(benchmark::State& state) {
  const auto model = random_model(64, 11);
  apl::Rng rng(5);
  std::vector<double> a(kDim), b(kDim);
  for (auto& v : a) v = rng.normal(0.0, 1.0);
  for (auto& v : b) v = rng.normal(0.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::pair_probability(model, a, b));
  }
}
BENCHMARK(BM_PairProbability);

// One full-batch gradient evaluation, the per-epoch cost of training.
static void BM_PairGradients(benchmark::State& state) {
  const auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 17);
  apl::IcdConfig cfg;
  const auto pairs = apl::build_pair_sets(batch, cfg);
  std::vector<std::vector<double>> pooled;
  pooled.reserve(batch.size());
  for (const auto& f : batch) pooled.push_back(apl::max_pool(f));
  const auto model = random_model(cfg.hidden_dim, 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::pair_gradients(model, pooled, pairs));
  }
  const auto n_pairs = pairs.positives.size() + pairs.negatives.size();
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n_pairs));
}
BENCHMARK(BM_PairGradients)->Range(16, 256);

static void BM_SimilarityScore(benchmark::State& state) {
  apl::Rng rng(23);
  const auto pred = random_instance(6, 0, rng);
  std::vector<apl::InstanceFeature> refs;
  for (int i = 0; i < state.range(0); ++i) refs.push_back(random_instance(6, 0, rng));
  const auto model = random_model(64, 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::similarity_score(model, pred, refs));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimilarityScore)->Range(8, 128);

BENCHMARK_MAIN();
