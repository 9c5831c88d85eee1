#pragma once

#include <cstddef>
#include <limits>
#include <string_view>

#include "gsml/matrix.hpp"

namespace gsml {

enum class DistanceKind { kEuclidean, kCosine };

DistanceKind parse_distance_kind(std::string_view name);
std::string_view to_string(DistanceKind kind);

// Value written on the diagonal by mask_diagonal.
inline constexpr double kMaskedDistance = std::numeric_limits<double>::max();

// Row i of `a` against row j of `b`. Cosine distance is 1 - cos; a zero vector
// is at distance 1 from everything.
Matrix pairwise_distance(const Matrix& a, const Matrix& b, DistanceKind kind);

double euclidean_distance(std::span<const double> a, std::span<const double> b) noexcept;
double cosine_distance(std::span<const double> a, std::span<const double> b) noexcept;

enum class RerankMode { kNone, kKReciprocal };

RerankMode parse_rerank_mode(std::string_view name);
std::string_view to_string(RerankMode mode);

struct RerankConfig {
  RerankMode mode = RerankMode::kKReciprocal;
  std::size_t k1 = 20;
  std::size_t k2 = 6;
  double lambda = 0.3;

  // Same config with k1 (and k2) clamped for an M x M input.
  RerankConfig capped_for(std::size_t m) const;
};

// k-reciprocal encoding re-ranking of a square distance matrix. The output is
// lambda * d + (1 - lambda) * jaccard. Mode none returns `d` unchanged.
Matrix rerank(const Matrix& d, const RerankConfig& cfg);

// Writes kMaskedDistance on the diagonal.
Matrix mask_diagonal(Matrix d);

}  // namespace gsml
