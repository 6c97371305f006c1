#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>

namespace nlwg {

// splitmix64: cheap, well-mixed stream splitter. Used to derive independent
// per-item seeds from one master seed so that parallel generation stays
// deterministic regardless of scheduling.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 1));
}

inline std::mt19937_64 make_engine(std::uint64_t seed) { return std::mt19937_64(seed); }

// FNV-1a over raw bytes: content fingerprints for datasets and design
// snapshots (not cryptographic).
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 14695981039346656037ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t hash_doubles(std::span<const double> v,
                                  std::uint64_t h = 14695981039346656037ULL) {
  return fnv1a64(v.data(), v.size() * sizeof(double), h);
}

}  // namespace nlwg
