// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Helpers shared by the test binaries: random tensors, finite-difference
// gradients, and a self-cleaning temp directory.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "patchforge/rng.hpp"
#include "patchforge/tensor.hpp"

namespace testutil {

inline patchforge::Tensor random_tensor(const patchforge::Shape& shape, uint64_t seed, double lo = 0.0,
                                        double hi = 1.0) {
  patchforge::Rng rng(seed);
  patchforge::Tensor t(shape);
  for (double& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

/// Finite-difference gradient via Richardson-extrapolated central
/// differences (error O(h^4) instead of O(h^2), which matters near the
/// sqrt kink in the TV term). One perturbed copy per element; slow but
/// obviously correct. Keep the inputs small.
inline patchforge::Tensor fd_gradient(const std::function<double(const patchforge::Tensor&)>& fn,
                                      const patchforge::Tensor& x, double eps) {
  patchforge::Tensor grad(x.shape());
  patchforge::Tensor probe = x.clone();
  auto central = [&](size_t i, double saved, double h) {
    probe.storage()[i] = saved + h;
    const double hi = fn(probe);
    probe.storage()[i] = saved - h;
    const double lo = fn(probe);
    probe.storage()[i] = saved;
    return (hi - lo) / (2.0 * h);
  };
  for (size_t i = 0; i < probe.storage().size(); ++i) {
    const double saved = probe.storage()[i];
    const double full = central(i, saved, eps);
    const double half = central(i, saved, eps / 2.0);
    grad.storage()[i] = (4.0 * half - full) / 3.0;
  }
  return grad;
}

/// Largest relative error between two gradients, with an absolute floor so
/// near-zero entries do not blow the ratio up.
inline double max_rel_error(const patchforge::Tensor& a, const patchforge::Tensor& b,
                            double abs_floor = 1e-4) {
  double worst = 0.0;
  for (size_t i = 0; i < a.storage().size(); ++i) {
    const double av = a.storage()[i];
    const double bv = b.storage()[i];
    const double denom = std::max({std::abs(av), std::abs(bv), abs_floor});
    worst = std::max(worst, std::abs(av - bv) / denom);
  }
  return worst;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    patchforge::Rng rng(
        static_cast<uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rng.next_u64() % 1000000000));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
