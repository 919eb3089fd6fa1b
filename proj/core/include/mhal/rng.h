#pragma once

#include <cstdint>
#include <random>

namespace mhal {

using Rng = std::mt19937_64;

// Derives an independent generator from (seed, stream). Streams keep the
// different consumers of randomness (init, shuffling, dropout, masking)
// decoupled, so adding draws to one never shifts another.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  // splitmix64 finalizer
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return Rng(x);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace mhal
