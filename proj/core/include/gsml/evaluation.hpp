#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gsml/data.hpp"
#include "gsml/metric.hpp"
#include "gsml/model.hpp"

namespace gsml {

struct EvalSplit {
  LabeledFeatureSet query;
  LabeledFeatureSet gallery;
};

struct EvalReport {
  double rank1 = 0.0;
  double map = 0.0;
  std::size_t num_queries = 0;
  std::vector<double> average_precisions;
};

// Moves `queries_per_class` random samples of every class to the query side.
// Labels keep the parent's id space.
EvalSplit make_split(const LabeledFeatureSet& set, std::size_t queries_per_class,
                     std::uint64_t seed);

// Single-query retrieval: gallery ranked by ascending distance, ties by
// gallery index. AP averages precision at every relevant position.
EvalReport evaluate_embeddings(const Matrix& query, std::span<const int> query_labels,
                               const Matrix& gallery, std::span<const int> gallery_labels,
                               DistanceKind kind);

EvalReport evaluate(const EmbeddingModel& model, const EvalSplit& split, DistanceKind kind);

// Unweighted mean of every rank1 and map value pooled together.
double macc(std::span<const EvalReport> reports);

struct EvalRow {
  std::string split;
  std::uint64_t seed = 0;
  double rank1 = 0.0;
  double map = 0.0;
  std::size_t num_queries = 0;
  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

// `split,seed,rank1,map,num_queries`
void write_eval_csv(std::ostream& out, std::span<const EvalRow> rows);
std::vector<EvalRow> read_eval_csv(std::istream& in);

}  // namespace gsml
