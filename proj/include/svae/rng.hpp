#pragma once

#include <cstdint>
#include <random>

namespace svae {

// All randomness in the project flows through mt19937_64 plus the explicit
// conversions below. std::*_distribution is avoided on purpose: its output
// is implementation-defined, these are not.
using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Uniform in [0, 1) with 53-bit resolution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [0, n). Modulo reduction; the bias is below 2^-50 for
// any n this project uses.
inline uint64_t uniform_index(Rng& rng, uint64_t n) {
  return rng() % n;
}

// Independent stream for a (seed, stream, step) triple. Used to split the
// master seed into per-purpose and per-step generators.
inline Rng substream(uint64_t seed, uint64_t stream, uint64_t step = 0) {
  return Rng(splitmix64(splitmix64(seed ^ (stream * 0xD1B54A32D192ED03ull)) + step));
}

}  // namespace svae
