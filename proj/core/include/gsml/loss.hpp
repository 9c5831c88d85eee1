#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gsml/matrix.hpp"

namespace gsml {

struct LossConfig {
  double margin = 16.0;
};

struct LossOutput {
  double value = 0.0;          // sum of per-anchor hinge terms
  Matrix grad_similarity;      // d value / d s, B x B
  std::size_t active_count = 0;
  std::size_t anchors_total = 0;
  std::vector<std::size_t> hardest_positive;  // per anchor
  std::vector<std::size_t> hardest_negative;  // per anchor

  double mean() const noexcept {
    return anchors_total == 0 ? 0.0 : value / static_cast<double>(anchors_total);
  }
  double active_fraction() const noexcept {
    return anchors_total == 0 ? 0.0
                              : static_cast<double>(active_count) / static_cast<double>(anchors_total);
  }
};

// Throws ValidationError unless `labels` form P >= 2 classes with the same
// K >= 2 samples each and `sim` is a finite B x B matrix.
void validate_batch(const Matrix& sim, std::span<const int> labels);

// Batch-hard triplet loss: for every anchor the least similar positive and the
// most similar negative, hinge m - s(a,p*) + s(a,n*). Argmin/argmax ties go to
// the lowest index; a hinge of exactly zero is inactive.
LossOutput batch_hard_triplet(const Matrix& sim, std::span<const int> labels, const LossConfig& cfg);

// Same quantity by enumerating every (anchor, positive, negative) triple.
LossOutput brute_force_triplet_oracle(const Matrix& sim, std::span<const int> labels,
                                      const LossConfig& cfg);

}  // namespace gsml
