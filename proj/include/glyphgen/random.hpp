#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace glyphgen {

/// Uniform integer in [0, n). Rejection sampling on the raw engine output so
/// the sequence does not depend on the standard library's distributions.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - (max % n + 1) % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v > limit);
  return static_cast<std::size_t>(v % n);
}

/// Uniform real in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace glyphgen
