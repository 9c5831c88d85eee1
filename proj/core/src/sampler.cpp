#include "gsml/sampler.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "gsml/error.hpp"
#include "gsml/metric.hpp"
#include "gsml/random.hpp"
#include "topk.hpp"

namespace gsml {

SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "gs") return SamplerKind::kGs;
  if (name == "pk") return SamplerKind::kPk;
  if (name == "cluster") return SamplerKind::kCluster;
  throw ConfigError("unknown sampler '" + std::string(name) + "' (expected pk|gs|cluster)");
}

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kGs: return "gs";
    case SamplerKind::kPk: return "pk";
    case SamplerKind::kCluster: return "cluster";
  }
  return "?";
}

void validate(const SamplerConfig& cfg, std::size_t num_classes) {
  const std::size_t k = cfg.instances_per_class;
  if (k < 2) throw ValidationError("instances per class K must be >= 2");
  if (cfg.batch_size % k != 0) {
    throw ValidationError("batch size " + std::to_string(cfg.batch_size) + " is not divisible by K=" +
                          std::to_string(k));
  }
  const std::size_t p = cfg.batch_size / k;
  if (p < 2) throw ValidationError("classes per batch P = B/K must be >= 2");
  if (p > num_classes) {
    throw ValidationError("classes per batch P=" + std::to_string(p) + " exceeds class count C=" +
                          std::to_string(num_classes));
  }
}

std::vector<std::size_t> select_exemplars(const DatasetIndex& index, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> out;
  out.reserve(index.num_classes());
  for (int pid : index.pids) {
    const auto& members = index.members(pid);
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    out.push_back(members[pick(rng)]);
  }
  return out;
}

ClassNeighborGraph build_class_graph(const Matrix& dist, std::size_t classes_per_batch) {
  const std::size_t c = dist.rows();
  if (dist.cols() != c) throw ValidationError("class distance matrix must be square");
  if (classes_per_batch < 2 || classes_per_batch > c) {
    throw ValidationError("classes per batch P=" + std::to_string(classes_per_batch) +
                          " must be in [2, C] for C=" + std::to_string(c));
  }
  const std::size_t k = classes_per_batch - 1;
  ClassNeighborGraph graph;
  graph.neighbors.resize(c);
  detail::SmallestK best(k);
  for (std::size_t i = 0; i < c; ++i) {
    auto row = dist.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      if (j != i) best.offer(row[j], j);
    }
    best.drain_sorted(graph.neighbors[i]);
  }
  return graph;
}

namespace {

void append_class(Batch& batch, const DatasetIndex& index, int pid, std::size_t k, Rng& rng,
                  std::size_t& replacement_draws) {
  const auto& members = index.members(pid);
  if (members.size() < k) ++replacement_draws;
  for (std::size_t idx : draw_instances(members, k, rng)) batch.push_back({idx, pid});
}

}  // namespace

BatchPlan gs_epoch_plan(const ClassNeighborGraph& graph, const DatasetIndex& index,
                        const SamplerConfig& cfg) {
  const std::size_t c = index.num_classes();
  validate(cfg, c);
  const std::size_t p = cfg.classes_per_batch();
  if (graph.num_classes() != c) {
    throw ValidationError("graph has " + std::to_string(graph.num_classes()) + " classes, index has " +
                          std::to_string(c));
  }
  for (const auto& row : graph.neighbors) {
    if (row.size() != p - 1) {
      throw ValidationError("graph rows hold " + std::to_string(row.size()) + " neighbors, expected P-1=" +
                            std::to_string(p - 1));
    }
  }
  Rng rng(cfg.seed);
  std::vector<int> centers = index.pids;
  std::shuffle(centers.begin(), centers.end(), rng);

  BatchPlan plan;
  plan.provenance = SamplerKind::kGs;
  plan.batches.reserve(c);
  for (int center : centers) {
    Batch batch;
    batch.reserve(cfg.batch_size);
    append_class(batch, index, center, cfg.instances_per_class, rng, plan.replacement_draws);
    for (int neighbor : graph.neighbors[center]) {
      append_class(batch, index, neighbor, cfg.instances_per_class, rng, plan.replacement_draws);
    }
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

BatchPlan pk_epoch_plan(const DatasetIndex& index, const SamplerConfig& cfg, std::size_t num_batches) {
  const std::size_t c = index.num_classes();
  validate(cfg, c);
  const std::size_t p = cfg.classes_per_batch();
  Rng rng(cfg.seed);
  BatchPlan plan;
  plan.provenance = SamplerKind::kPk;
  plan.batches.reserve(num_batches);
  for (std::size_t b = 0; b < num_batches; ++b) {
    Batch batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t pos : sample_without_replacement(c, p, rng)) {
      append_class(batch, index, index.pids[pos], cfg.instances_per_class, rng, plan.replacement_draws);
    }
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

std::size_t nearest_center(std::span<const double> point, const Matrix& centers, double* best_d2) {
  std::size_t best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < centers.rows(); ++m) {
    const double d2 = squared_distance(point, centers.row(m));
    if (d2 < best_val) {
      best_val = d2;
      best = m;
    }
  }
  if (best_d2) *best_d2 = best_val;
  return best;
}

}  // namespace

ClusterAssignment cluster_classes(const Matrix& points, std::size_t num_clusters, std::uint64_t seed) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  if (num_clusters < 1 || num_clusters > n) {
    throw ValidationError("subspace count M=" + std::to_string(num_clusters) + " must be in [1, C=" +
                          std::to_string(n) + "]");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // k-means++ seeding.
  Matrix centers(num_clusters, d);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::copy(points.row(first).begin(), points.row(first).end(), centers.row(0).begin());
  for (std::size_t m = 1; m < num_clusters; ++m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centers.row(m - 1)));
      total += d2[i];
    }
    std::size_t chosen = n - 1;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && target < acc) {
          chosen = i;
          break;
        }
      }
      while (d2[chosen] == 0.0) --chosen;
    } else {
      chosen = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    std::copy(points.row(chosen).begin(), points.row(chosen).end(), centers.row(m).begin());
  }

  std::vector<int> assign(n, 0);
  std::vector<double> point_d2(n);
  constexpr std::size_t kMaxIterations = 100;
  constexpr double kTolerance = 1e-6;
  for (std::size_t iter = 0; iter < kMaxIterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = static_cast<int>(nearest_center(points.row(i), centers, &point_d2[i]));
    }
    Matrix next(num_clusters, d);
    std::vector<std::size_t> counts(num_clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      auto dst = next.row(assign[i]);
      auto src = points.row(i);
      for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
    }
    std::vector<char> taken(n, 0);
    for (std::size_t m = 0; m < num_clusters; ++m) {
      if (counts[m] > 0) {
        for (double& x : next.row(m)) x /= static_cast<double>(counts[m]);
        continue;
      }
      // Empty cluster: restart it at the point farthest from its center.
      std::size_t far = 0;
      double far_d2 = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && point_d2[i] > far_d2) {
          far_d2 = point_d2[i];
          far = i;
        }
      }
      taken[far] = 1;
      std::copy(points.row(far).begin(), points.row(far).end(), next.row(m).begin());
    }
    double shift = 0.0;
    for (std::size_t m = 0; m < num_clusters; ++m) {
      shift = std::max(shift, std::sqrt(squared_distance(next.row(m), centers.row(m))));
    }
    centers = std::move(next);
    if (shift <= kTolerance) break;
  }
  for (std::size_t i = 0; i < n; ++i) {
    assign[i] = static_cast<int>(nearest_center(points.row(i), centers, nullptr));
  }
  return {std::move(assign), std::move(centers)};
}

ClusterAssignment merge_small_clusters(ClusterAssignment a, std::size_t min_size) {
  const std::size_t m = a.num_clusters();
  std::vector<std::size_t> sizes(m, 0);
  for (int c : a.cluster_of) ++sizes[c];
  while (true) {
    std::size_t victim = m;
    std::size_t alive = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (sizes[i] == 0) continue;
      ++alive;
      if (sizes[i] < min_size && (victim == m || sizes[i] < sizes[victim])) victim = i;
    }
    if (victim == m || alive < 2) break;
    std::size_t target = m;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      if (i == victim || sizes[i] == 0) continue;
      const double d2 = squared_distance(a.centroids.row(victim), a.centroids.row(i));
      if (d2 < best) {
        best = d2;
        target = i;
      }
    }
    const double wv = static_cast<double>(sizes[victim]);
    const double wt = static_cast<double>(sizes[target]);
    auto dst = a.centroids.row(target);
    auto src = a.centroids.row(victim);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = (dst[k] * wt + src[k] * wv) / (wt + wv);
    for (int& c : a.cluster_of) {
      if (c == static_cast<int>(victim)) c = static_cast<int>(target);
    }
    sizes[target] += sizes[victim];
    sizes[victim] = 0;
  }
  std::vector<int> remap(m, -1);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < m; ++i) {
    if (sizes[i] > 0) {
      remap[i] = static_cast<int>(kept.size());
      kept.push_back(i);
    }
  }
  ClusterAssignment out;
  out.centroids = a.centroids.gather_rows(kept);
  out.cluster_of.reserve(a.cluster_of.size());
  for (int c : a.cluster_of) out.cluster_of.push_back(remap[c]);
  return out;
}

BatchPlan cluster_epoch_plan(const ClusterAssignment& assignment, const DatasetIndex& index,
                             const SamplerConfig& cfg, std::size_t num_batches) {
  const std::size_t c = index.num_classes();
  validate(cfg, c);
  if (assignment.cluster_of.size() != c) {
    throw ValidationError("cluster assignment covers " + std::to_string(assignment.cluster_of.size()) +
                          " classes, index has " + std::to_string(c));
  }
  const std::size_t p = cfg.classes_per_batch();
  const ClusterAssignment merged = merge_small_clusters(assignment, p);
  const std::size_t m = merged.num_clusters();
  std::vector<std::vector<int>> members(m);
  for (std::size_t cls = 0; cls < c; ++cls) members[merged.cluster_of[cls]].push_back(index.pids[cls]);
  for (const auto& group : members) {
    if (group.size() < p) {
      throw ValidationError("every cluster is smaller than P=" + std::to_string(p) + " after merging");
    }
  }

  // Largest-remainder apportionment of batches to clusters by class count.
  std::vector<std::size_t> quota(m);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double exact = static_cast<double>(num_batches) * static_cast<double>(members[i].size()) /
                         static_cast<double>(c);
    quota[i] = static_cast<std::size_t>(exact);
    assigned += quota[i];
    remainders.push_back({exact - static_cast<double>(quota[i]), i});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t r = 0; assigned < num_batches; ++r, ++assigned) ++quota[remainders[r % m].second];

  Rng rng(cfg.seed);
  std::vector<std::size_t> priority(m);
  std::iota(priority.begin(), priority.end(), std::size_t{0});
  std::shuffle(priority.begin(), priority.end(), rng);

  BatchPlan plan;
  plan.provenance = SamplerKind::kCluster;
  plan.batches.reserve(num_batches);
  // Smooth weighted round-robin: visits cluster i exactly quota[i] times.
  std::vector<long long> credit(m, 0);
  const auto total = static_cast<long long>(num_batches);
  for (std::size_t b = 0; b < num_batches; ++b) {
    std::size_t pick = priority[0];
    for (std::size_t i : priority) {
      credit[i] += static_cast<long long>(quota[i]);
    }
    for (std::size_t i : priority) {
      if (credit[i] > credit[pick]) pick = i;
    }
    credit[pick] -= total;
    const auto& group = members[pick];
    Batch batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t pos : sample_without_replacement(group.size(), p, rng)) {
      append_class(batch, index, group[pos], cfg.instances_per_class, rng, plan.replacement_draws);
    }
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

void check_plan(const BatchPlan& plan, const DatasetIndex& index, const SamplerConfig& cfg) {
  const std::size_t p = cfg.classes_per_batch();
  const std::size_t k = cfg.instances_per_class;
  for (std::size_t b = 0; b < plan.batches.size(); ++b) {
    const Batch& batch = plan.batches[b];
    auto fail = [&](const std::string& why) {
      throw ValidationError("batch " + std::to_string(b) + ": " + why);
    };
    if (batch.size() != cfg.batch_size) fail("holds " + std::to_string(batch.size()) + " samples");
    std::map<int, std::size_t> counts;
    for (const BatchEntry& e : batch) {
      auto it = index.index_dict.find(e.class_id);
      if (it == index.index_dict.end()) fail("unknown class " + std::to_string(e.class_id));
      if (!std::binary_search(it->second.begin(), it->second.end(), e.index)) {
        fail("sample " + std::to_string(e.index) + " is not a member of class " + std::to_string(e.class_id));
      }
      ++counts[e.class_id];
    }
    if (counts.size() != p) fail("holds " + std::to_string(counts.size()) + " distinct classes");
    for (const auto& [cls, n] : counts) {
      if (n != k) fail("class " + std::to_string(cls) + " has " + std::to_string(n) + " samples");
    }
  }
}

void write_plan(std::ostream& out, const BatchPlan& plan) {
  for (std::size_t b = 0; b < plan.batches.size(); ++b) {
    out << b << ':';
    for (const BatchEntry& e : plan.batches[b]) out << " (" << e.index << ':' << e.class_id << ')';
    out << '\n';
  }
}

}  // namespace gsml
