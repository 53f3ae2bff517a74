#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace tabpfn::prior {

using Rng = std::mt19937_64;

/// Independent stream for item `index` of a run seeded with `seed` (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double std = 1.0) {
  return std::normal_distribution<double>(mean, std)(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform(rng) < p; }

/// Integer uniformly drawn from [lo, hi].
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

inline double beta(Rng& rng, double a, double b) {
  const double x = std::gamma_distribution<double>(a, 1.0)(rng);
  const double y = std::gamma_distribution<double>(b, 1.0)(rng);
  return (x + y) > 0.0 ? x / (x + y) : 0.5;
}

/// Normal(mean, std) conditioned on [lo, hi] by rejection; falls back to
/// clamping when the interval carries almost no mass.
inline double truncated_normal(Rng& rng, double mean, double std, double lo, double hi) {
  if (std <= 0.0) return std::clamp(mean, lo, hi);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double v = normal(rng, mean, std);
    if (v >= lo && v <= hi) return v;
  }
  return std::clamp(mean, lo, hi);
}

/// Index drawn proportionally to non-negative weights.
inline std::size_t categorical(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform(rng, 0.0, total);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // Rounding at the top end: return the last index with positive weight.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return 0;
}

inline std::vector<std::size_t> permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace tabpfn::prior
