#include <benchmark/benchmark.h>

#include <vector>

#include "apl/geometry.hpp"
#include "apl/rng.hpp"

namespace {

std::vector<apl::Segment> random_segments(std::size_t n, std::uint64_t seed) {
  apl::Rng rng(seed);
  std::vector<apl::Segment> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double start = rng.uniform(0.0, 200.0);
    const double len = rng.uniform(0.5, 8.0);
    out.emplace_back(start, start + len);
  }
  return out;
}

}  // namespace

static void BM_Tiou(benchmark::State& state) {
  const apl::Segment a(10.0, 18.0);
  const apl::Segment b(14.0, 25.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::tiou(a, b));
  }
}
BENCHMARK(BM_Tiou);

static void BM_Diou(benchmark::State& state) {
  const apl::Segment a(10.0, 18.0);
  const apl::Segment b(14.0, 25.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::diou(a, b));
  }
}
BENCHMARK(BM_Diou);

// All-pairs overlap over a pool, the access pattern of suppression and of
// matching predictions to ground truth.
static void BM_PairwiseTiou(benchmark::State& state) {
  const auto segs = random_segments(static_cast<std::size_t>(state.range(0)), 42);
  for (auto _ : state) {
    double acc = 0.0;
    for (const auto& a : segs)
      for (const auto& b : segs) acc += apl::tiou(a, b);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_PairwiseTiou)->Range(64, 1024);

BENCHMARK_MAIN();
