// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "patchforge/autodiff.hpp"

namespace patchforge {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Parameters that do not require grad, or that
/// have no accumulated grad yet, are left untouched by step().
class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig cfg = {});

  void step();
  void zero_grad();

  const AdamConfig& config() const { return cfg_; }
  int64_t steps_taken() const { return t_; }

 private:
  struct Slot {
    Tensor m;
    Tensor v;
  };
  std::vector<Var> params_;
  std::unordered_map<const void*, Slot> state_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

}  // namespace patchforge
