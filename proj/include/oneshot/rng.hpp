#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace oneshot {

using Rng = std::mt19937_64;

/// Independent generator for a named purpose ("init", "episodes", "eval", ...).
/// Streams depend only on (seed, name), never on the order they are requested.
inline Rng named_stream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // splitmix64 finalizer over the combined key
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (h | 1ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return Rng(z);
}

}  // namespace oneshot
