#include "gsml/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "gsml/error.hpp"
#include "gsml/random.hpp"

namespace gsml {

EvalSplit make_split(const LabeledFeatureSet& set, std::size_t queries_per_class, std::uint64_t seed) {
  const DatasetIndex index = build_index(set);
  if (queries_per_class < 1) throw ValidationError("queries per class must be >= 1");
  Rng rng(seed);
  std::vector<char> is_query(set.size(), 0);
  std::vector<std::size_t> query_rows;
  for (int pid : index.pids) {
    const auto& members = index.members(pid);
    if (members.size() <= queries_per_class) {
      throw ValidationError("class " + std::to_string(pid) + " has " + std::to_string(members.size()) +
                            " samples; needs more than " + std::to_string(queries_per_class) +
                            " for the query/gallery split");
    }
    for (std::size_t row : draw_instances(members, queries_per_class, rng)) {
      is_query[row] = 1;
      query_rows.push_back(row);
    }
  }
  std::vector<std::size_t> gallery_rows;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!is_query[i]) gallery_rows.push_back(i);
  }
  auto take = [&](const std::vector<std::size_t>& rows) {
    LabeledFeatureSet out;
    out.features = set.features.gather_rows(rows);
    for (std::size_t r : rows) out.labels.push_back(set.labels[r]);
    out.original_ids = set.original_ids;
    return out;
  };
  return {take(query_rows), take(gallery_rows)};
}

EvalReport evaluate_embeddings(const Matrix& query, std::span<const int> query_labels,
                               const Matrix& gallery, std::span<const int> gallery_labels,
                               DistanceKind kind) {
  if (query.rows() != query_labels.size() || gallery.rows() != gallery_labels.size()) {
    throw ValidationError("evaluate: label counts do not match embedding rows");
  }
  const Matrix dist = pairwise_distance(query, gallery, kind);
  EvalReport report;
  report.num_queries = query.rows();
  report.average_precisions.reserve(query.rows());
  std::vector<std::size_t> order(gallery.rows());
  std::size_t hits = 0;
  for (std::size_t q = 0; q < query.rows(); ++q) {
    auto row = dist.row(q);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return row[x] < row[y] || (row[x] == row[y] && x < y);
    });
    std::size_t relevant = 0;
    double precision_sum = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      if (gallery_labels[order[rank]] == query_labels[q]) {
        ++relevant;
        precision_sum += static_cast<double>(relevant) / static_cast<double>(rank + 1);
      }
    }
    if (relevant == 0) {
      throw ValidationError("query " + std::to_string(q) + " has no gallery match");
    }
    if (!order.empty() && gallery_labels[order[0]] == query_labels[q]) ++hits;
    report.average_precisions.push_back(precision_sum / static_cast<double>(relevant));
  }
  if (report.num_queries > 0) {
    const double nq = static_cast<double>(report.num_queries);
    report.rank1 = static_cast<double>(hits) / nq;
    report.map = std::accumulate(report.average_precisions.begin(), report.average_precisions.end(), 0.0) / nq;
  }
  return report;
}

EvalReport evaluate(const EmbeddingModel& model, const EvalSplit& split, DistanceKind kind) {
  return evaluate_embeddings(forward(model, split.query.features), split.query.labels,
                             forward(model, split.gallery.features), split.gallery.labels, kind);
}

double macc(std::span<const EvalReport> reports) {
  if (reports.empty()) throw ValidationError("mAcc needs at least one report");
  double sum = 0.0;
  for (const EvalReport& r : reports) sum += r.rank1 + r.map;
  return sum / static_cast<double>(2 * reports.size());
}

void write_eval_csv(std::ostream& out, std::span<const EvalRow> rows) {
  out << "split,seed,rank1,map,num_queries\n";
  char buf[128];
  for (const EvalRow& r : rows) {
    std::snprintf(buf, sizeof buf, ",%llu,%.17g,%.17g,%zu\n", static_cast<unsigned long long>(r.seed), r.rank1,
                  r.map, r.num_queries);
    out << r.split << buf;
  }
}

std::vector<EvalRow> read_eval_csv(std::istream& in) {
  std::vector<EvalRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::istringstream fields(line);
    std::string split, seed, rank1, map, nq;
    if (!std::getline(fields, split, ',') || !std::getline(fields, seed, ',') ||
        !std::getline(fields, rank1, ',') || !std::getline(fields, map, ',') || !std::getline(fields, nq)) {
      throw ParseError("<eval csv>", line_no, "expected 5 columns");
    }
    try {
      rows.push_back({split, std::stoull(seed), std::stod(rank1), std::stod(map), std::stoul(nq)});
    } catch (const std::logic_error&) {
      throw ParseError("<eval csv>", line_no, "invalid number");
    }
  }
  return rows;
}

}  // namespace gsml
