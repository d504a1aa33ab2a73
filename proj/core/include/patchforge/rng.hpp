// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace patchforge {

/// Deterministic, platform-independent random source.
///
/// std::mt19937_64 output is fully specified by the standard, but the
/// standard library *distributions* are not, so every draw here (uniforms,
/// normals, bounded ints, shuffles) is implemented on top of the raw engine.
/// Two builds with the same seed produce the same byte streams everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (two engine draws per value, no cache,
  /// so the stream position is a pure function of the call count).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    // log(0) guard: push u1 away from zero by one ulp of the grid.
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Uniform integer in [0, n). Rejection sampling, unbiased.
  uint64_t bounded(uint64_t n) {
    if (n <= 1) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Fisher-Yates shuffle using bounded().
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Derive an independent child stream. The derivation depends only on the
  /// construction seed and the stream id, never on how many values were
  /// drawn, so per-item streams can be split up front and used in any order.
  Rng child(uint64_t stream) const {
    return Rng(splitmix64(seed_ + (stream + 1) * 0x9e3779b97f4a7c15ull));
  }

  static uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace patchforge
