#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace viewpose {

// All randomness in a run flows from one root seed. Named streams (e.g.
// "data", "model-init", "training") are derived so components can be varied
// independently without perturbing each other.
inline std::uint64_t stream_seed(std::uint64_t root_seed, std::string_view stream) {
  // splitmix64 over the root seed mixed with a FNV-1a hash of the stream name.
  std::uint64_t h = 14695981039346656037ull;
  for (char c : stream) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = root_seed + 0x9e3779b97f4a7c15ull + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t root_seed, std::string_view stream) {
  return Rng(stream_seed(root_seed, stream));
}

}  // namespace viewpose
