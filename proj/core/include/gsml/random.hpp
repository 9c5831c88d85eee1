#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace gsml {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

// Seed for a named sub-stream (epoch, purpose, run ...) of a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept;

// Draws `k` items from `pool` uniformly: without replacement when the pool
// holds at least `k` items, with replacement otherwise.
std::vector<std::size_t> draw_instances(std::span<const std::size_t> pool, std::size_t k, Rng& rng);

// Uniform k-subset of [0, n) in random order (partial Fisher-Yates).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

}  // namespace gsml
