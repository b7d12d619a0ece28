#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace conflab {

/// All randomness in the library flows through mt19937_64 engines seeded via
/// derive_seed, so independent stages (init, shuffling, noise injection, ...)
/// get decorrelated, reproducible streams from one experiment seed.
using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Splits a named substream off a base seed (order-independent, collision-safe
/// for the handful of tags used here).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  return detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a(tag) + index));
}

inline Rng make_rng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, tag, index));
}

}  // namespace conflab
