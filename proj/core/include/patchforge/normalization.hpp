// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include <nlohmann/json.hpp>

#include "patchforge/autodiff.hpp"

namespace patchforge {

/// Per-channel pixel statistics applied just before the backbone, so
/// everything upstream (patches, placements, saved crops) works in raw
/// [0,1] space.
struct Normalization {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.5, 0.5, 0.5};

  /// mean 0.5 / std 0.5 on every channel (google ViT convention).
  static Normalization half();
  /// ImageNet statistics (DINO family convention).
  static Normalization imagenet();

  /// (B,3,H,W) in [0,1] -> standardized values, differentiable in x.
  Var apply(const Var& x) const;

  nlohmann::ordered_json to_json() const;
  static Normalization from_json(const nlohmann::json& doc);
};

}  // namespace patchforge
