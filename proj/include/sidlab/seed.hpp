#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sidlab {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent stream seed for (master seed, label).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t state = seed ^ fnv1a64(label);
  splitmix64(state);
  return splitmix64(state);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                                 std::uint64_t index) {
  std::uint64_t state = derive_seed(seed, label) ^ (index * 0xd1b54a32d192ed03ULL);
  return splitmix64(state);
}

inline Rng make_rng(std::uint64_t seed, std::string_view label) {
  return Rng(derive_seed(seed, label));
}

}  // namespace sidlab
