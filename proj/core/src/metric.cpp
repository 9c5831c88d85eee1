#include "gsml/metric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "gsml/error.hpp"
#include "topk.hpp"

namespace gsml {

DistanceKind parse_distance_kind(std::string_view name) {
  if (name == "euclidean") return DistanceKind::kEuclidean;
  if (name == "cosine") return DistanceKind::kCosine;
  throw ConfigError("unknown metric '" + std::string(name) + "' (expected euclidean|cosine)");
}

std::string_view to_string(DistanceKind kind) {
  return kind == DistanceKind::kEuclidean ? "euclidean" : "cosine";
}

RerankMode parse_rerank_mode(std::string_view name) {
  if (name == "none") return RerankMode::kNone;
  if (name == "kreciprocal") return RerankMode::kKReciprocal;
  throw ConfigError("unknown rerank mode '" + std::string(name) + "' (expected none|kreciprocal)");
}

std::string_view to_string(RerankMode mode) {
  return mode == RerankMode::kNone ? "none" : "kreciprocal";
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const double d0 = a[k] - b[k], d1 = a[k + 1] - b[k + 1];
    const double d2 = a[k + 2] - b[k + 2], d3 = a[k + 3] - b[k + 3];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; k < n; ++k) s0 += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt((s0 + s1) + (s2 + s3));
}

double cosine_distance(std::span<const double> a, std::span<const double> b) noexcept {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 1.0;
  return std::clamp(1.0 - dot(a, b) / (na * nb), 0.0, 2.0);
}

namespace {

// Copies the strict upper triangle onto the lower one, tile by tile so both
// sides stay cache resident.
void mirror_upper(Matrix& m) {
  constexpr std::size_t kTile = 32;
  const std::size_t n = m.rows();
  for (std::size_t i0 = 0; i0 < n; i0 += kTile) {
    for (std::size_t j0 = 0; j0 <= i0; j0 += kTile) {
      for (std::size_t i = i0; i < std::min(n, i0 + kTile); ++i) {
        for (std::size_t j = j0; j < std::min(i, j0 + kTile); ++j) m(i, j) = m(j, i);
      }
    }
  }
}

}  // namespace

Matrix pairwise_distance(const Matrix& a, const Matrix& b, DistanceKind kind) {
  if (a.cols() != b.cols()) {
    throw ValidationError("pairwise_distance: dimension mismatch (" + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.cols()) + ")");
  }
  Matrix out(a.rows(), b.rows());
  if (kind == DistanceKind::kEuclidean) {
    if (&a == &b) {
      // Self-distance: the kernel is exactly symmetric, so fill both halves.
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = i + 1; j < a.rows(); ++j) out(i, j) = euclidean_distance(a.row(i), a.row(j));
      }
      mirror_upper(out);
      return out;
    }
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = euclidean_distance(a.row(i), b.row(j));
    }
    return out;
  }
  std::vector<double> nb(b.rows());
  for (std::size_t j = 0; j < b.rows(); ++j) nb[j] = norm2(b.row(j));
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double na = norm2(a.row(i));
    for (std::size_t j = 0; j < b.rows(); ++j) {
      out(i, j) = (na == 0.0 || nb[j] == 0.0)
                      ? 1.0
                      : std::clamp(1.0 - dot(a.row(i), b.row(j)) / (na * nb[j]), 0.0, 2.0);
    }
  }
  return out;
}

RerankConfig RerankConfig::capped_for(std::size_t m) const {
  RerankConfig out = *this;
  if (m >= 1) {
    out.k1 = std::min(out.k1, m - 1);
    out.k2 = std::min(out.k2, out.k1);
  }
  return out;
}

namespace {

// For every column c, the first `count` row indices in ascending order of
// d(r, c) / scale[c], ties to the lower index. Scans d row by row.
std::vector<std::vector<std::size_t>> column_ranks(const Matrix& d, const std::vector<double>& scale,
                                                   std::size_t count) {
  const std::size_t m = d.rows();
  std::vector<detail::SmallestK> best(m, detail::SmallestK(count));
  for (std::size_t r = 0; r < m; ++r) {
    auto row = d.row(r);
    for (std::size_t c = 0; c < m; ++c) best[c].offer(row[c] / scale[c], r);
  }
  std::vector<std::vector<std::size_t>> ranks(m);
  for (std::size_t c = 0; c < m; ++c) best[c].drain_sorted(ranks[c]);
  return ranks;
}

// Members f of the first `k + 1` neighbors of `i` that also list `i` among
// their own first `k + 1` neighbors.
std::vector<std::size_t> reciprocal_neighbors(const std::vector<std::vector<std::size_t>>& ranks,
                                              std::size_t i, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r <= k; ++r) {
    const std::size_t f = ranks[i][r];
    const auto& back = ranks[f];
    if (std::find(back.begin(), back.begin() + k + 1, i) != back.begin() + k + 1) out.push_back(f);
  }
  return out;
}

}  // namespace

Matrix rerank(const Matrix& d, const RerankConfig& cfg) {
  if (d.rows() != d.cols()) throw ValidationError("rerank: distance matrix must be square");
  if (cfg.mode == RerankMode::kNone) return d;
  const std::size_t m = d.rows();
  if (cfg.k1 < 1 || cfg.k1 >= m) {
    throw ValidationError("rerank: k1=" + std::to_string(cfg.k1) + " must be in [1, M-1] for M=" +
                          std::to_string(m));
  }
  if (cfg.k2 < 1 || cfg.k2 > cfg.k1) throw ValidationError("rerank: k2 must be in [1, k1]");
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) throw ValidationError("rerank: lambda must be in [0, 1]");
  if (!d.all_finite()) throw ValidationError("rerank: distances must be finite");

  // Row i of the normalized matrix is column i of d over its maximum.
  std::vector<double> scale(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) scale[j] = std::max(scale[j], d(i, j));
  }
  for (double& s : scale) s = s > 0.0 ? s : 1.0;
  auto nd = [&](std::size_t i, std::size_t j) { return d(j, i) / scale[i]; };

  const std::size_t k1 = cfg.k1;
  const auto half_k1 = static_cast<std::size_t>(std::nearbyint(static_cast<double>(k1) / 2.0));
  const auto ranks = column_ranks(d, scale, k1 + 1);

  // Rows of the neighborhood encoding are sparse: (column, weight), ascending.
  using SparseRow = std::vector<std::pair<std::size_t, double>>;
  std::vector<SparseRow> v(m);
  std::vector<char> in_set(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto recip = reciprocal_neighbors(ranks, i, k1);
    std::vector<std::size_t> expansion = recip;
    for (std::size_t r : recip) in_set[r] = 1;
    for (std::size_t cand : recip) {
      const auto cand_recip = reciprocal_neighbors(ranks, cand, half_k1);
      std::size_t overlap = 0;
      for (std::size_t c : cand_recip) overlap += in_set[c];
      if (3.0 * static_cast<double>(overlap) > 2.0 * static_cast<double>(cand_recip.size())) {
        expansion.insert(expansion.end(), cand_recip.begin(), cand_recip.end());
      }
    }
    for (std::size_t r : recip) in_set[r] = 0;
    std::sort(expansion.begin(), expansion.end());
    expansion.erase(std::unique(expansion.begin(), expansion.end()), expansion.end());
    double total = 0.0;
    for (std::size_t j : expansion) {
      v[i].emplace_back(j, std::exp(-nd(i, j)));
      total += v[i].back().second;
    }
    for (auto& entry : v[i]) entry.second /= total;
  }

  if (cfg.k2 != 1) {
    std::vector<SparseRow> qe(m);
    std::vector<double> acc(m, 0.0);
    std::vector<char> touched(m, 0);
    std::vector<std::size_t> cols;
    const double inv = 1.0 / static_cast<double>(cfg.k2);
    for (std::size_t i = 0; i < m; ++i) {
      cols.clear();
      for (std::size_t r = 0; r < cfg.k2; ++r) {
        for (const auto& [j, w] : v[ranks[i][r]]) {
          acc[j] += w;
          if (!touched[j]) {
            touched[j] = 1;
            cols.push_back(j);
          }
        }
      }
      std::sort(cols.begin(), cols.end());
      for (std::size_t j : cols) {
        if (acc[j] != 0.0) qe[i].emplace_back(j, acc[j] * inv);
        acc[j] = 0.0;
        touched[j] = 0;
      }
    }
    v = std::move(qe);
  }

  std::vector<SparseRow> inverted(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto& [j, w] : v[i]) inverted[j].emplace_back(i, w);
  }

  // Shared mass is symmetric in (i, j): fill the upper triangle and mirror.
  // Both halves sum over the same l in the same order, so they agree exactly.
  Matrix out(m, m);
  std::vector<double> shared(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(shared.begin() + static_cast<std::ptrdiff_t>(i), shared.end(), 0.0);
    for (const auto& [l, vil] : v[i]) {
      const auto& col = inverted[l];
      auto it = std::lower_bound(col.begin(), col.end(), i,
                                 [](const std::pair<std::size_t, double>& e, std::size_t key) { return e.first < key; });
      for (; it != col.end(); ++it) shared[it->first] += std::min(vil, it->second);
    }
    for (std::size_t j = i; j < m; ++j) out(i, j) = 1.0 - shared[j] / (2.0 - shared[j]);
  }
  mirror_upper(out);
  for (std::size_t i = 0; i < m; ++i) {
    auto row = out.row(i);
    auto orig = d.row(i);
    for (std::size_t j = 0; j < m; ++j) row[j] = row[j] * (1.0 - cfg.lambda) + orig[j] * cfg.lambda;
  }
  return out;
}

Matrix mask_diagonal(Matrix d) {
  if (d.rows() != d.cols()) throw ValidationError("mask_diagonal: matrix must be square");
  for (std::size_t i = 0; i < d.rows(); ++i) d(i, i) = kMaskedDistance;
  return d;
}

}  // namespace gsml
