#pragma once

#include "hedonic/core_types.hpp"

#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>

namespace hedonic {

using Rng = std::mt19937_64;

// splitmix64 finalizer
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a; stable across platforms, unlike std::hash.
inline std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline RowIndices iota_rows(Index n) {
  RowIndices rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  return rows;
}

/// Fisher-Yates with an explicit uniform draw so the permutation does not
/// depend on the standard library's shuffle implementation.
inline void shuffle_rows(RowIndices& rows, Rng& rng) {
  for (std::size_t i = rows.size(); i > 1; --i) {
    const std::uint64_t j = rng() % i;
    std::swap(rows[i - 1], rows[static_cast<std::size_t>(j)]);
  }
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace hedonic
