#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gsml/matrix.hpp"

namespace gsml {

// N feature vectors with contiguous class ids in [0, C-1].
struct LabeledFeatureSet {
  Matrix features;               // N x d_in
  std::vector<int> labels;       // length N
  // Original ids as they appeared in the source (file or parent set), indexed
  // by normalized class id. Empty means ids are already original.
  std::vector<long long> original_ids;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  std::size_t num_classes() const;
};

// Throws ValidationError unless the set satisfies its invariants
// (N >= C >= 2, contiguous labels, finite features).
void validate(const LabeledFeatureSet& set);

struct DatasetIndex {
  std::vector<int> pids;                                // ascending
  std::map<int, std::vector<std::size_t>> index_dict;   // class -> sample rows, ascending
  std::size_t num_classes() const noexcept { return pids.size(); }
  const std::vector<std::size_t>& members(int pid) const { return index_dict.at(pid); }
};

DatasetIndex build_index(const LabeledFeatureSet& set);

struct SyntheticConfig {
  std::size_t num_classes = 64;
  std::size_t samples_per_class_min = 6;
  std::size_t samples_per_class_max = 6;
  std::size_t ambient_dim = 32;
  std::size_t num_groups = 8;
  double group_center_scale = 6.0;
  double class_center_scale = 1.0;
  double within_class_sigma = 0.35;
  // Trailing `nuisance_dims` coordinates carry extra class-independent noise
  // of std `nuisance_sigma`, so a learned projection has something to discard.
  std::size_t nuisance_dims = 0;
  double nuisance_sigma = 0.0;
  std::uint64_t seed = 1;
};

void validate(const SyntheticConfig& cfg);

// Two-level Gaussian structure: group centers, class centers around them,
// samples around class centers. Classes are assigned to groups round-robin.
LabeledFeatureSet generate_synthetic(const SyntheticConfig& cfg);

// Moves `held_out` randomly chosen classes into a second set. Both outputs are
// relabeled to contiguous ids; original_ids record the parent's ids.
std::pair<LabeledFeatureSet, LabeledFeatureSet> split_by_class(const LabeledFeatureSet& set,
                                                               std::size_t held_out,
                                                               std::uint64_t seed);

// Subset of rows, relabeled to contiguous ids in order of first class id.
LabeledFeatureSet subset_rows(const LabeledFeatureSet& set, const std::vector<std::size_t>& rows);

void save_featureset(const LabeledFeatureSet& set, const std::filesystem::path& path);
LabeledFeatureSet load_featureset(const std::filesystem::path& path);

// Text serialization shared by save_featureset and content hashing.
std::string serialize_featureset(const LabeledFeatureSet& set);
LabeledFeatureSet parse_featureset(const std::string& text, const std::string& source = "<memory>");

// 64-bit FNV-1a over the serialized content.
std::uint64_t content_hash(const LabeledFeatureSet& set);

}  // namespace gsml
