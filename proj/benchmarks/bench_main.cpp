#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gsml/loss.hpp"
#include "gsml/metric.hpp"
#include "gsml/sampler.hpp"
#include "gsml/trainer.hpp"

namespace {

using namespace gsml;

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(rows, cols);
  for (double& v : m.values()) v = g(rng);
  return m;
}

void BM_PairwiseDistance(benchmark::State& state) {
  const Matrix e = gaussian(static_cast<std::size_t>(state.range(0)), 128, 1);
  for (auto _ : state) benchmark::DoNotOptimize(pairwise_distance(e, e, DistanceKind::kEuclidean));
}
BENCHMARK(BM_PairwiseDistance)->Arg(128)->Arg(512)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Rerank(benchmark::State& state) {
  const Matrix e = gaussian(static_cast<std::size_t>(state.range(0)), 128, 2);
  const Matrix d = pairwise_distance(e, e, DistanceKind::kEuclidean);
  for (auto _ : state) benchmark::DoNotOptimize(rerank(d, RerankConfig{}));
}
BENCHMARK(BM_Rerank)->Arg(128)->Arg(512)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_BuildClassGraph(benchmark::State& state) {
  const Matrix e = gaussian(static_cast<std::size_t>(state.range(0)), 128, 3);
  const Matrix d = mask_diagonal(pairwise_distance(e, e, DistanceKind::kEuclidean));
  for (auto _ : state) benchmark::DoNotOptimize(build_class_graph(d, 32));
}
BENCHMARK(BM_BuildClassGraph)->Arg(128)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_GsEpochPlan(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  LabeledFeatureSet set;
  set.features = Matrix(c * 4, 1);
  for (std::size_t i = 0; i < c * 4; ++i) set.labels.push_back(static_cast<int>(i / 4));
  const DatasetIndex index = build_index(set);
  const Matrix e = gaussian(c, 16, 4);
  const auto graph = build_class_graph(mask_diagonal(pairwise_distance(e, e, DistanceKind::kEuclidean)), 32);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gs_epoch_plan(graph, index, {64, 2, seed++}));
}
BENCHMARK(BM_GsEpochPlan)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_BatchHardTriplet(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const Matrix e = gaussian(b, 128, 5);
  Matrix sim = pairwise_distance(e, e, DistanceKind::kEuclidean);
  for (double& v : sim.values()) v = -v;
  std::vector<int> labels;
  for (std::size_t i = 0; i < b; ++i) labels.push_back(static_cast<int>(i / 2));
  for (auto _ : state) benchmark::DoNotOptimize(batch_hard_triplet(sim, labels, {16.0}));
}
BENCHMARK(BM_BatchHardTriplet)->Arg(16)->Arg(64)->Arg(256);

void BM_LossAndGrad(benchmark::State& state) {
  const auto model = EmbeddingModel::random({ModelKind::kLinear, 128, 0, 128, true, false}, 6);
  const Matrix x = gaussian(64, 128, 7);
  std::vector<int> labels;
  for (int i = 0; i < 64; ++i) labels.push_back(i / 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_and_grad(model, x, labels, DistanceKind::kEuclidean, {16.0}));
  }
}
BENCHMARK(BM_LossAndGrad)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
