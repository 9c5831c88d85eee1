#include "gsml/loss.hpp"

#include <limits>
#include <map>
#include <string>

#include "gsml/error.hpp"

namespace gsml {

void validate_batch(const Matrix& sim, std::span<const int> labels) {
  const std::size_t b = labels.size();
  if (sim.rows() != b || sim.cols() != b) {
    throw ValidationError("similarity matrix must be " + std::to_string(b) + "x" + std::to_string(b));
  }
  if (!sim.all_finite()) throw ValidationError("similarity matrix has non-finite entries");
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) throw ValidationError("batch needs at least 2 classes");
  const std::size_t k = counts.begin()->second;
  for (const auto& [cls, n] : counts) {
    if (n < 2) throw ValidationError("anchor has no positive: class " + std::to_string(cls) + " has 1 sample");
    if (n != k) throw ValidationError("batch classes have unequal sample counts");
  }
}

namespace {

LossOutput empty_output(std::size_t b) {
  LossOutput out;
  out.grad_similarity = Matrix(b, b);
  out.anchors_total = b;
  out.hardest_positive.assign(b, 0);
  out.hardest_negative.assign(b, 0);
  return out;
}

void accumulate(LossOutput& out, std::size_t a, std::size_t pos, std::size_t neg, double term) {
  out.hardest_positive[a] = pos;
  out.hardest_negative[a] = neg;
  if (term > 0.0) {
    out.value += term;
    ++out.active_count;
    out.grad_similarity(a, pos) -= 1.0;
    out.grad_similarity(a, neg) += 1.0;
  }
}

}  // namespace

LossOutput batch_hard_triplet(const Matrix& sim, std::span<const int> labels, const LossConfig& cfg) {
  validate_batch(sim, labels);
  const std::size_t b = labels.size();
  LossOutput out = empty_output(b);
  for (std::size_t a = 0; a < b; ++a) {
    std::size_t pos = b;
    std::size_t neg = b;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        if (pos == b || sim(a, j) < sim(a, pos)) pos = j;
      } else if (neg == b || sim(a, j) > sim(a, neg)) {
        neg = j;
      }
    }
    accumulate(out, a, pos, neg, cfg.margin - sim(a, pos) + sim(a, neg));
  }
  return out;
}

LossOutput brute_force_triplet_oracle(const Matrix& sim, std::span<const int> labels,
                                      const LossConfig& cfg) {
  validate_batch(sim, labels);
  const std::size_t b = labels.size();
  LossOutput out = empty_output(b);
  for (std::size_t a = 0; a < b; ++a) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_p = b;
    std::size_t best_n = b;
    for (std::size_t p = 0; p < b; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t n = 0; n < b; ++n) {
        if (labels[n] == labels[a]) continue;
        const double term = cfg.margin - sim(a, p) + sim(a, n);
        // Among equal terms prefer the less similar positive, then the more
        // similar negative, then the earliest (p, n) in enumeration order.
        bool better = term > best;
        if (!better && term == best) {
          better = sim(a, p) < sim(a, best_p) ||
                   (sim(a, p) == sim(a, best_p) && sim(a, n) > sim(a, best_n));
        }
        if (better) {
          best = term;
          best_p = p;
          best_n = n;
        }
      }
    }
    accumulate(out, a, best_p, best_n, best);
  }
  return out;
}

}  // namespace gsml
