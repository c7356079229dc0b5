#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace refaudit {

// All randomized steps in the toolkit draw from mt19937_64 through the
// helpers below. The engine itself is fully specified by the standard, and
// the draw algorithms are written out here rather than delegating to
// std::uniform_int_distribution et al., whose output is implementation
// defined. Same seed, same stream of values, on every platform.
using RngEngine = std::mt19937_64;

// splitmix64; used to decorrelate seeds before they reach the engine.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline RngEngine make_rng(std::uint64_t seed) { return RngEngine(mix64(seed)); }

// Independent engine for sub-stream `stream` of run `seed`. Records of a
// generation plan each get their own stream keyed by position, so output is
// identical no matter how the work is batched or interleaved.
inline RngEngine derive_rng(std::uint64_t seed, std::uint64_t stream) {
  return RngEngine(mix64(mix64(seed) ^ mix64(stream + 0x5851f42d4c957f2dull)));
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_real(RngEngine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Rejection sampling, so the result is exactly
// uniform; n must be positive.
inline std::size_t uniform_index(RngEngine& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  const std::uint64_t bound = n;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % bound);
}

// Draws an index against a precomputed inclusive cumulative-sum table
// (ascending, last entry = total mass). Preferred in sampling loops.
inline std::size_t weighted_index_cumulative(RngEngine& rng,
                                             std::span<const double> cumulative) {
  if (cumulative.empty() || cumulative.back() <= 0.0)
    throw std::invalid_argument("weighted_index: no positive mass");
  const double u = uniform_real(rng) * cumulative.back();
  std::size_t lo = 0, hi = cumulative.size() - 1;
  while (lo < hi) {
    std::size_t mid = (lo + hi) / 2;
    if (cumulative[mid] <= u)
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo;
}

// Draws an index with probability proportional to weights[i]. Weights must
// be non-negative with a positive sum.
inline std::size_t weighted_index(RngEngine& rng, std::span<const double> weights) {
  std::vector<double> cumulative(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0)
      throw std::invalid_argument("weighted_index: negative weight");
    total += weights[i];
    cumulative[i] = total;
  }
  return weighted_index_cumulative(rng, cumulative);
}

// Standard normal via Box-Muller on uniform_real (not
// std::normal_distribution, same portability reasoning as above).
inline double standard_normal(RngEngine& rng) {
  double u1 = uniform_real(rng);
  while (u1 <= 0.0) u1 = uniform_real(rng);
  const double u2 = uniform_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle(RngEngine& rng, std::vector<T>& items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace refaudit
