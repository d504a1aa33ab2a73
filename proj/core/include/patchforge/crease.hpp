// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include "patchforge/autodiff.hpp"
#include "patchforge/rng.hpp"

namespace patchforge {

struct CreaseConfig {
  double angle_window_deg = 5.0;   // width of the perturbation window
  double strength = 0.02;          // k: px of displacement per px^2 of distance
  double max_offset_frac = 0.10;   // cap as a fraction of the patch side
};

/// One crease: a line through the vantage point; pixels on the positive
/// side are displaced along the crease direction by min(k*d^2, cap).
struct CreaseSpec {
  double vantage_u = 0.5;  // normalized [0,1] patch coordinates
  double vantage_v = 0.5;
  double direction_deg = 0.0;
  double strength = 0.02;
  double max_offset_px = 0.0;

  nlohmann::ordered_json to_json() const;
  static CreaseSpec from_json(const nlohmann::json& doc);
};

/// Vantage uniform in [0,1]^2; direction = uniform base angle in [0, 360)
/// plus a perturbation uniform in the +/- window/2 range. patch_side
/// resolves the displacement cap to pixels.
CreaseSpec sample_crease(Rng& rng, const CreaseConfig& cfg, int64_t patch_side);

/// Displacement field (2, H, W), x-offsets then y-offsets, in pixels.
/// Zero on the crease line and on the negative side; quadratic in the
/// signed distance below the cap.
Tensor crease_field(const CreaseSpec& spec, int64_t h, int64_t w);

/// Backward-flow warp: out(p) = src(p + D(p)), bilinear with edge clamping.
Var warp_by_field(const Var& patch, const Tensor& field);

}  // namespace patchforge
