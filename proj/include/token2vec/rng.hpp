#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace token2vec {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_bytes(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Named sub-stream seeds: every random draw in the pipeline is keyed by
// (global seed, purpose, item) so results do not depend on iteration order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0) {
  return mix64(mix64(seed ^ hash_bytes(purpose)) ^ mix64(index));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::string_view key) {
  return derive_seed(seed, purpose, hash_bytes(key));
}

}  // namespace token2vec
