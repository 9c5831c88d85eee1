#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "gsml/error.hpp"
#include "gsml/metric.hpp"
#include "gsml/sampler.hpp"
#include "oracles.hpp"

namespace gsml {
namespace {

DatasetIndex index_with_sizes(const std::vector<std::size_t>& sizes) {
  LabeledFeatureSet s;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    for (std::size_t k = 0; k < sizes[c]; ++k) s.labels.push_back(static_cast<int>(c));
  }
  s.features = Matrix(s.labels.size(), 1);
  return build_index(s);
}

Matrix random_masked(std::size_t c, std::mt19937_64& rng, bool coarse = false) {
  std::uniform_int_distribution<int> small(0, 4);
  std::uniform_real_distribution<double> real(0.0, 10.0);
  Matrix d(c, c);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) d(i, j) = coarse ? small(rng) : real(rng);
  }
  return mask_diagonal(d);
}

TEST(SelectExemplars, SingletonClasses) {
  LabeledFeatureSet s;
  s.labels = {0, 0, 0, 0, 0, 0, 1, 1};
  s.features = Matrix(8, 1);
  DatasetIndex index;
  index.pids = {0, 1};
  index.index_dict[0] = {5};
  index.index_dict[1] = {7};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EXPECT_EQ(select_exemplars(index, seed), (std::vector<std::size_t>{5, 7}));
  }
}

TEST(SelectExemplars, MembershipOverManySeeds) {
  const auto index = index_with_sizes({1, 3, 5, 2, 8});
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto ex = select_exemplars(index, seed);
    ASSERT_EQ(ex.size(), 5u);
    for (std::size_t c = 0; c < 5; ++c) {
      const auto& m = index.members(index.pids[c]);
      EXPECT_TRUE(std::binary_search(m.begin(), m.end(), ex[c]));
    }
  }
}

TEST(SelectExemplars, UniformWithinClass) {
  const auto index = index_with_sizes({4, 2});
  std::map<std::size_t, int> freq;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) ++freq[select_exemplars(index, seed)[0]];
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(freq[i] / 10000.0, 0.25, 0.02);
}

TEST(BuildClassGraph, SmallExample) {
  const double inf = kMaskedDistance;
  const Matrix d(3, 3, {inf, 1, 2, 1, inf, 3, 2, 3, inf});
  const auto g = build_class_graph(d, 2);
  EXPECT_EQ(g.neighbors, (std::vector<std::vector<int>>{{1}, {0}, {0}}));
}

TEST(BuildClassGraph, DefaultBatchGives31Neighbors) {
  std::mt19937_64 rng(1);
  const SamplerConfig cfg{64, 2, 0};
  const auto g = build_class_graph(random_masked(40, rng), cfg.classes_per_batch());
  for (const auto& row : g.neighbors) EXPECT_EQ(row.size(), 31u);
}

TEST(BuildClassGraph, MatchesSortOracleWithTies) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng() % 19;
    const std::size_t p = 2 + rng() % (c - 1);
    const Matrix d = random_masked(c, rng, trial % 2 == 0);
    EXPECT_EQ(build_class_graph(d, p).neighbors, oracle::sort_graph(d, p));
  }
}

TEST(BuildClassGraph, PermutationEquivariant) {
  std::mt19937_64 rng(23);
  const std::size_t c = 15;
  const Matrix d = random_masked(c, rng);
  std::vector<int> perm(c);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix pd(c, c);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) pd(perm[i], perm[j]) = d(i, j);
  }
  const auto g = build_class_graph(d, 5);
  const auto pg = build_class_graph(pd, 5);
  for (std::size_t i = 0; i < c; ++i) {
    std::vector<int> mapped;
    for (int n : g.neighbors[i]) mapped.push_back(perm[n]);
    EXPECT_EQ(pg.neighbors[perm[i]], mapped);
  }
}

TEST(BuildClassGraph, RejectsPAboveC) {
  EXPECT_THROW(build_class_graph(mask_diagonal(Matrix(3, 3, 1.0)), 4), ValidationError);
}

TEST(GsEpochPlan, ForcedGraph) {
  const auto index = index_with_sizes({3, 3, 3, 3});
  ClassNeighborGraph g{{{1}, {0}, {3}, {2}}};
  const auto plan = gs_epoch_plan(g, index, {4, 2, 5});
  ASSERT_EQ(plan.batches.size(), 4u);
  for (const Batch& b : plan.batches) {
    ASSERT_EQ(b.size(), 4u);
    if (b[0].class_id == 2) {
      std::set<int> classes;
      for (const auto& e : b) classes.insert(e.class_id);
      EXPECT_EQ(classes, (std::set<int>{2, 3}));
    }
  }
  check_plan(plan, index, {4, 2, 5});
}

TEST(GsEpochPlan, StructureAcrossSeeds) {
  std::mt19937_64 rng(31);
  const auto index = index_with_sizes({2, 5, 1, 4, 3, 6, 2, 2, 7, 3});
  const SamplerConfig base{8, 2, 0};
  const auto g = build_class_graph(random_masked(10, rng), base.classes_per_batch());
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SamplerConfig cfg = base;
    cfg.seed = seed;
    const auto plan = gs_epoch_plan(g, index, cfg);
    ASSERT_EQ(plan.batches.size(), 10u);
    EXPECT_NO_THROW(check_plan(plan, index, cfg));
    std::vector<int> centers;
    for (const Batch& b : plan.batches) {
      const int center = b[0].class_id;
      centers.push_back(center);
      std::vector<int> expected{center};
      expected.insert(expected.end(), g.neighbors[center].begin(), g.neighbors[center].end());
      for (std::size_t slot = 0; slot < expected.size(); ++slot) {
        for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(b[slot * 2 + k].class_id, expected[slot]);
      }
    }
    std::sort(centers.begin(), centers.end());
    EXPECT_EQ(centers, index.pids);
    // Class 2 has a single sample so it is drawn with replacement.
    EXPECT_GE(plan.replacement_draws, 1u);
  }
}

TEST(GsEpochPlan, LengthIndependentOfBatchShape) {
  std::mt19937_64 rng(3);
  const auto index = index_with_sizes(std::vector<std::size_t>(40, 4));
  const Matrix d = random_masked(40, rng);
  for (auto [b, k] : {std::pair{8, 2}, {16, 4}, {64, 2}, {30, 3}}) {
    const SamplerConfig cfg{static_cast<std::size_t>(b), static_cast<std::size_t>(k), 1};
    const auto plan = gs_epoch_plan(build_class_graph(d, cfg.classes_per_batch()), index, cfg);
    EXPECT_EQ(plan.batches.size(), 40u);
  }
}

TEST(GsEpochPlan, NoDuplicateInstancesWhenClassIsLargeEnough) {
  std::mt19937_64 rng(5);
  const auto index = index_with_sizes(std::vector<std::size_t>(12, 3));
  const SamplerConfig cfg{12, 3, 9};
  const auto plan = gs_epoch_plan(build_class_graph(random_masked(12, rng), 4), index, cfg);
  for (const Batch& b : plan.batches) {
    std::set<std::size_t> idx;
    for (const auto& e : b) idx.insert(e.index);
    EXPECT_EQ(idx.size(), b.size());
  }
  EXPECT_EQ(plan.replacement_draws, 0u);
}

TEST(GsEpochPlan, RejectsInconsistentGraph) {
  const auto index = index_with_sizes({2, 2, 2});
  EXPECT_THROW(gs_epoch_plan(ClassNeighborGraph{{{1}, {0}}}, index, {4, 2, 0}), ValidationError);
  EXPECT_THROW(gs_epoch_plan(ClassNeighborGraph{{{1, 2}, {0, 2}, {0, 1}}}, index, {4, 2, 0}), ValidationError);
  EXPECT_THROW(gs_epoch_plan(ClassNeighborGraph{{{1}, {0}, {0}}}, index, {4, 1, 0}), ValidationError);
}

TEST(GsEpochPlan, Deterministic) {
  std::mt19937_64 rng(9);
  const auto index = index_with_sizes(std::vector<std::size_t>(20, 5));
  const auto g = build_class_graph(random_masked(20, rng), 4);
  EXPECT_EQ(gs_epoch_plan(g, index, {8, 2, 4}), gs_epoch_plan(g, index, {8, 2, 4}));
  EXPECT_FALSE(gs_epoch_plan(g, index, {8, 2, 4}) == gs_epoch_plan(g, index, {8, 2, 5}));
}

TEST(PkEpochPlan, TwoClassesAlwaysBoth) {
  const auto index = index_with_sizes({3, 4});
  const auto plan = pk_epoch_plan(index, {4, 2, 1}, 25);
  ASSERT_EQ(plan.batches.size(), 25u);
  for (const Batch& b : plan.batches) {
    std::set<int> classes;
    for (const auto& e : b) classes.insert(e.class_id);
    EXPECT_EQ(classes, (std::set<int>{0, 1}));
  }
}

TEST(PkEpochPlan, PairFrequencyIsUniform) {
  const auto index = index_with_sizes(std::vector<std::size_t>(10, 3));
  const std::size_t n = 45000;
  const auto plan = pk_epoch_plan(index, {4, 2, 77}, n);
  std::map<std::pair<int, int>, std::size_t> freq;
  for (const Batch& b : plan.batches) {
    int a = b[0].class_id, c = b[2].class_id;
    ++freq[{std::min(a, c), std::max(a, c)}];
  }
  ASSERT_EQ(freq.size(), 45u);
  const double p = 1.0 / 45.0;
  const double sigma = std::sqrt(static_cast<double>(n) * p * (1 - p));
  for (const auto& [pair, count] : freq) {
    EXPECT_NEAR(static_cast<double>(count), static_cast<double>(n) * p, 3.0 * sigma) << pair.first << "," << pair.second;
  }
}

TEST(PkEpochPlan, ValidAndDeterministic) {
  const auto index = index_with_sizes({2, 5, 1, 4, 3, 6});
  const SamplerConfig cfg{6, 2, 3};
  const auto plan = pk_epoch_plan(index, cfg, 30);
  EXPECT_NO_THROW(check_plan(plan, index, cfg));
  EXPECT_EQ(plan, pk_epoch_plan(index, cfg, 30));
  EXPECT_THROW(pk_epoch_plan(index, {14, 2, 3}, 3), ValidationError);
}

TEST(ClusterClasses, SingleCluster) {
  std::mt19937_64 rng(2);
  const auto a = cluster_classes(oracle::random_matrix(12, 3, rng), 1, 5);
  for (int c : a.cluster_of) EXPECT_EQ(c, 0);
}

TEST(ClusterClasses, OneClusterPerPoint) {
  std::mt19937_64 rng(2);
  const auto a = cluster_classes(oracle::random_matrix(9, 3, rng), 9, 5);
  std::set<int> ids(a.cluster_of.begin(), a.cluster_of.end());
  EXPECT_EQ(ids.size(), 9u);
}

TEST(ClusterClasses, DuplicatePointsShareClusters) {
  Matrix pts(6, 2, {0, 0, 0, 0, 5, 5, 5, 5, 9, 0, 9, 0});
  const auto a = cluster_classes(pts, 6, 1);
  EXPECT_EQ(a.cluster_of[0], a.cluster_of[1]);
  EXPECT_EQ(a.cluster_of[2], a.cluster_of[3]);
  EXPECT_EQ(a.cluster_of[4], a.cluster_of[5]);
}

double wcss(const Matrix& pts, const std::vector<int>& assign, int k) {
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    std::vector<double> mean(pts.cols(), 0.0);
    double n = 0;
    for (std::size_t i = 0; i < pts.rows(); ++i) {
      if (assign[i] != c) continue;
      for (std::size_t j = 0; j < pts.cols(); ++j) mean[j] += pts(i, j);
      ++n;
    }
    if (n == 0) continue;
    for (double& m : mean) m /= n;
    for (std::size_t i = 0; i < pts.rows(); ++i) {
      if (assign[i] != c) continue;
      for (std::size_t j = 0; j < pts.cols(); ++j) total += (pts(i, j) - mean[j]) * (pts(i, j) - mean[j]);
    }
  }
  return total;
}

TEST(ClusterClasses, TwoBlobsMatchExhaustiveOptimum) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 12;
    Matrix pts = oracle::random_matrix(n, 3, rng, 0.5);
    for (std::size_t i = 0; i < n; i += 2) pts(i, 0) += 20.0;
    // Exhaustive 2-partition.
    std::vector<int> best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < (1u << n) - 1; ++mask) {
      std::vector<int> assign(n);
      for (std::size_t i = 0; i < n; ++i) assign[i] = (mask >> i) & 1u;
      const double cost = wcss(pts, assign, 2);
      if (cost < best_cost) {
        best_cost = cost;
        best = assign;
      }
    }
    const auto got = cluster_classes(pts, 2, static_cast<std::uint64_t>(trial)).cluster_of;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(got[i] == got[0], best[i] == best[0]);
      EXPECT_EQ(got[i] == got[0], i % 2 == 0);
    }
  }
}

TEST(ClusterClasses, RejectsTooManyClusters) {
  EXPECT_THROW(cluster_classes(Matrix(3, 2), 4, 0), ValidationError);
}

TEST(ClusterEpochPlan, BatchesStayInsideOneCluster) {
  std::mt19937_64 rng(12);
  const auto index = index_with_sizes(std::vector<std::size_t>(30, 3));
  const auto assignment = cluster_classes(oracle::random_matrix(30, 4, rng), 5, 3);
  const SamplerConfig cfg{6, 2, 8};
  const auto plan = cluster_epoch_plan(assignment, index, cfg, 40);
  EXPECT_NO_THROW(check_plan(plan, index, cfg));
  const auto merged = merge_small_clusters(assignment, 3);
  for (const Batch& b : plan.batches) {
    for (const auto& e : b) EXPECT_EQ(merged.cluster_of[e.class_id], merged.cluster_of[b[0].class_id]);
  }
}

TEST(ClusterEpochPlan, ProportionalQuota) {
  const auto index = index_with_sizes(std::vector<std::size_t>(16, 2));
  ClusterAssignment a;
  for (int c = 0; c < 16; ++c) a.cluster_of.push_back(c < 8 ? 0 : 1);
  a.centroids = Matrix(2, 1, {0.0, 1.0});
  const auto plan = cluster_epoch_plan(a, index, {8, 2, 1}, 16);
  std::size_t from_first = 0;
  for (const Batch& b : plan.batches) from_first += b[0].class_id < 8 ? 1 : 0;
  EXPECT_EQ(from_first, 8u);
}

TEST(ClusterEpochPlan, SingleClusterCoversAllPairs) {
  const auto index = index_with_sizes(std::vector<std::size_t>(5, 2));
  ClusterAssignment a{std::vector<int>(5, 0), Matrix(1, 1)};
  const auto plan = cluster_epoch_plan(a, index, {4, 2, 2}, 2000);
  std::set<std::pair<int, int>> pairs;
  for (const Batch& b : plan.batches) {
    pairs.insert({std::min(b[0].class_id, b[2].class_id), std::max(b[0].class_id, b[2].class_id)});
  }
  EXPECT_EQ(pairs.size(), 10u);
}

TEST(ClusterEpochPlan, SmallClustersAreMerged) {
  const auto index = index_with_sizes(std::vector<std::size_t>(6, 2));
  ClusterAssignment a{{0, 0, 0, 0, 1, 2}, Matrix(3, 1, {0.0, 10.0, 1.0})};
  const auto merged = merge_small_clusters(a, 3);
  EXPECT_EQ(merged.num_clusters(), 1u);
  const auto plan = cluster_epoch_plan(a, index, {6, 2, 0}, 5);
  EXPECT_EQ(plan.batches.size(), 5u);
  // P larger than any achievable cluster.
  EXPECT_THROW(cluster_epoch_plan(a, index, {14, 2, 0}, 5), ValidationError);
}

TEST(WritePlan, Format) {
  BatchPlan plan;
  plan.batches = {{{3, 0}, {5, 0}, {1, 1}, {2, 1}}};
  std::ostringstream out;
  write_plan(out, plan);
  EXPECT_EQ(out.str(), "0: (3:0) (5:0) (1:1) (2:1)\n");
}

}  // namespace
}  // namespace gsml
