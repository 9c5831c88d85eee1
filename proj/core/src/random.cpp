#include "gsml/random.hpp"

#include <numeric>

namespace gsml {

std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) noexcept {
  return mix_seed(mix_seed(mix_seed(base) ^ a) ^ b);
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

std::vector<std::size_t> draw_instances(std::span<const std::size_t> pool, std::size_t k, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(k);
  if (pool.size() >= k) {
    for (std::size_t pos : sample_without_replacement(pool.size(), k, rng)) out.push_back(pool[pos]);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < k; ++i) out.push_back(pool[pick(rng)]);
  }
  return out;
}

}  // namespace gsml
