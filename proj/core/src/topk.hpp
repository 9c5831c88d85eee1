#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

namespace gsml::detail {

// Keeps the `k` smallest (value, id) pairs offered so far. Pairs compare
// lexicographically, so equal values resolve to the lower id. Candidates are
// buffered and pruned in bulk, which is cheaper than a heap per offer.
class SmallestK {
 public:
  explicit SmallestK(std::size_t k) : k_(k) { buf_.reserve(2 * k + 1); }

  void offer(double value, std::size_t id) {
    if (value > bound_) return;
    buf_.emplace_back(value, id);
    if (buf_.size() > 2 * k_) prune();
  }

  // Ids in ascending (value, id) order; leaves the selector empty.
  template <typename Id>
  void drain_sorted(std::vector<Id>& out) {
    prune();
    std::sort(buf_.begin(), buf_.end());
    out.clear();
    for (const auto& e : buf_) out.push_back(static_cast<Id>(e.second));
    buf_.clear();
    bound_ = std::numeric_limits<double>::infinity();
  }

 private:
  void prune() {
    if (k_ == 0) {
      buf_.clear();
      bound_ = -std::numeric_limits<double>::infinity();
      return;
    }
    if (buf_.size() <= k_) return;
    const auto kth = buf_.begin() + static_cast<std::ptrdiff_t>(k_ - 1);
    std::nth_element(buf_.begin(), kth, buf_.end());
    buf_.resize(k_);
    // Everything kept is <= the k-th pair, so larger values can be skipped.
    bound_ = kth->first;
  }

  std::size_t k_;
  double bound_ = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, std::size_t>> buf_;
};

}  // namespace gsml::detail
