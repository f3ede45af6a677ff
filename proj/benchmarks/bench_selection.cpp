#include <benchmark/benchmark.h>

#include <cstddef>
#include <string>
#include <vector>

#include "apl/quality.hpp"
#include "apl/rng.hpp"
#include "apl/selection.hpp"

namespace {

constexpr std::size_t kClasses = 20;
constexpr double kFps = 5.0;

apl::FramePredictions random_preds(std::size_t frames, std::uint64_t seed) {
  apl::Rng rng(seed);
  apl::FramePredictions p;
  p.cls = apl::Matrix(kClasses, frames);
  p.offsets = apl::Matrix(2, frames);
  p.tiou_hat.resize(frames);
  p.tnd_hat.resize(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < kClasses; ++k) p.cls(k, t) = rng.uniform01();
    p.tiou_hat[t] = rng.uniform01();
    p.tnd_hat[t] = rng.uniform(0.0, 0.5);
    p.offsets(0, t) = rng.uniform(0.5, 3.0);
    p.offsets(1, t) = rng.uniform(0.5, 3.0);
  }
  return p;
}

std::vector<apl::Instance> random_instances(std::size_t n, std::uint64_t seed) {
  apl::Rng rng(seed);
  std::vector<apl::Instance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    apl::Instance inst;
    const double start = rng.uniform(0.0, 200.0);
    inst.segment = apl::Segment(start, start + rng.uniform(0.5, 8.0));
    inst.class_index = static_cast<std::size_t>(rng.uniform_int(5));
    inst.score = rng.uniform01();
    inst.video_id = "bench";
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace

static void BM_JointScore(benchmark::State& state) {
  const auto preds = random_preds(static_cast<std::size_t>(state.range(0)), 7);
  const apl::ScoringConfig scoring;
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::joint_score(preds, scoring));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * kClasses);
}
BENCHMARK(BM_JointScore)->Range(256, 4096);

static void BM_DecodeInstances(benchmark::State& state) {
  const std::size_t frames = static_cast<std::size_t>(state.range(0));
  const auto preds = random_preds(frames, 7);
  std::vector<double> times(frames);
  for (std::size_t t = 0; t < frames; ++t) times[t] = (t + 0.5) / kFps;
  const apl::SelectionConfig cfg;
  const apl::ScoringConfig scoring;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        apl::decode_instances(preds, times, "bench", cfg, scoring));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DecodeInstances)->Range(256, 4096);

static void BM_SoftNms(benchmark::State& state) {
  const auto pool = random_instances(static_cast<std::size_t>(state.range(0)), 42);
  const apl::SelectionConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::soft_nms(pool, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SoftNms)->Range(64, 2048);

static void BM_DynamicPartition(benchmark::State& state) {
  const auto pool = random_instances(static_cast<std::size_t>(state.range(0)), 42);
  const apl::SelectionConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::dynamic_partition(pool, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DynamicPartition)->Range(64, 2048);

BENCHMARK_MAIN();
