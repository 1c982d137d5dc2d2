#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace genrank {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent streams from a root seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stream for (seed, module tag, id...). Every random decision in the project
/// flows through one of these so runs are reproducible piecewise.
inline Rng derive_rng(std::uint64_t seed, std::string_view tag, std::uint64_t a = 0,
                      std::uint64_t b = 0) {
  std::uint64_t s = mix64(seed ^ mix64(hash_tag(tag)));
  s = mix64(s ^ mix64(a + 0x51ed27ULL));
  s = mix64(s ^ mix64(b + 0x2545f491ULL));
  return Rng(s);
}

/// Uniform integer in [0, n). Avoids std::uniform_int_distribution so the
/// sequence does not depend on the standard library implementation.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

/// Uniform double in [0, 1).
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Container>
void shuffle_in_place(Container& c, Rng& rng) {
  for (std::size_t i = c.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    using std::swap;
    swap(c[i - 1], c[j]);
  }
}

}  // namespace genrank
