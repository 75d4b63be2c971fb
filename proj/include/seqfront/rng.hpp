#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace seqfront::rng {

// All randomness in the toolkit flows from one master seed through named
// substreams, so any stage (or any single training step) can re-derive its
// generator without threading RNG state around:
//   substream(master, "pretrain.shuffle", epoch)
//   substream(master, "mtl.dropout", step)

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, std::string_view name, uint64_t index = 0) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the stream name
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return splitmix64(master ^ splitmix64(h) ^ splitmix64(index * 0x9e3779b97f4a7c15ull + 1));
}

inline std::mt19937_64 substream(uint64_t master, std::string_view name, uint64_t index = 0) {
  return std::mt19937_64(derive_seed(master, name, index));
}

// Sampling built only on the engine's raw output; std::*_distribution is
// implementation-defined and would tie artifacts to a libstdc++ version.

inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline uint64_t below(std::mt19937_64& g, uint64_t n) {
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = g();
  } while (x >= limit);
  return x % n;
}

inline double gauss(std::mt19937_64& g) {
  double u1;
  do {
    u1 = uniform01(g);
  } while (u1 <= 0.0);
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

}  // namespace seqfront::rng
