#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "gsml/data.hpp"
#include "gsml/matrix.hpp"

namespace gsml {

enum class SamplerKind { kGs, kPk, kCluster };

SamplerKind parse_sampler_kind(std::string_view name);
std::string_view to_string(SamplerKind kind);

struct SamplerConfig {
  std::size_t batch_size = 64;
  std::size_t instances_per_class = 2;
  std::uint64_t seed = 0;

  std::size_t classes_per_batch() const noexcept { return batch_size / instances_per_class; }
};

// Checks K >= 2, K | B, 2 <= P <= num_classes.
void validate(const SamplerConfig& cfg, std::size_t num_classes);

// neighbors[c] holds the P-1 nearest other classes of class c, nearest first.
struct ClassNeighborGraph {
  std::vector<std::vector<int>> neighbors;
  std::size_t num_classes() const noexcept { return neighbors.size(); }
};

struct BatchEntry {
  std::size_t index;
  int class_id;
  friend bool operator==(const BatchEntry&, const BatchEntry&) = default;
};

using Batch = std::vector<BatchEntry>;

struct BatchPlan {
  std::vector<Batch> batches;
  SamplerKind provenance = SamplerKind::kGs;
  // Number of class draws that fell back to sampling with replacement.
  std::size_t replacement_draws = 0;

  friend bool operator==(const BatchPlan& a, const BatchPlan& b) {
    return a.batches == b.batches && a.provenance == b.provenance;
  }
};

// One uniformly chosen sample per class; position c belongs to pids[c].
std::vector<std::size_t> select_exemplars(const DatasetIndex& index, std::uint64_t seed);

// Row c: the P-1 smallest entries of dist[c, :], ascending, ties to the lower id.
// `dist` must already have its diagonal masked.
ClassNeighborGraph build_class_graph(const Matrix& dist, std::size_t classes_per_batch);

// One batch per class: the center's K samples followed by K samples of each
// neighbor in graph order. Centers are a seeded shuffle of pids.
BatchPlan gs_epoch_plan(const ClassNeighborGraph& graph, const DatasetIndex& index,
                        const SamplerConfig& cfg);

// Independent batches of P uniformly drawn distinct classes.
BatchPlan pk_epoch_plan(const DatasetIndex& index, const SamplerConfig& cfg,
                        std::size_t num_batches);

struct ClusterAssignment {
  std::vector<int> cluster_of;  // per class
  Matrix centroids;             // M x d
  std::size_t num_clusters() const noexcept { return centroids.rows(); }
};

// Seeded k-means++ / Lloyd clustering of class representations into M groups.
ClusterAssignment cluster_classes(const Matrix& class_embeddings, std::size_t num_clusters,
                                  std::uint64_t seed);

// Merges every cluster holding fewer than `min_size` classes into the cluster
// with the nearest centroid; cluster ids are compacted afterwards.
ClusterAssignment merge_small_clusters(ClusterAssignment assignment, std::size_t min_size);

// PK-style batches whose P classes all come from one cluster. Clusters are
// visited in a seeded weighted round-robin proportional to their size.
BatchPlan cluster_epoch_plan(const ClusterAssignment& assignment, const DatasetIndex& index,
                             const SamplerConfig& cfg, std::size_t num_batches);

// Throws ValidationError if a batch does not hold P distinct classes x K
// samples or references an index outside `index`.
void check_plan(const BatchPlan& plan, const DatasetIndex& index, const SamplerConfig& cfg);

// `batch_id: (idx:class) (idx:class) ...`, one line per batch.
void write_plan(std::ostream& out, const BatchPlan& plan);

}  // namespace gsml
