// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include "patchforge/autodiff.hpp"
#include "patchforge/rng.hpp"

namespace patchforge {

/// Sampling ranges for the per-item transform draw.
struct EotConfig {
  double rotation_deg = 20.0;  // +/- range
  double scale_min = 0.25;
  double scale_max = 1.25;
  double shear = 0.7;  // +/- range, per axis
  double brightness = 0.1;
  double contrast_min = 0.8;
  double contrast_max = 1.2;
  double noise_sigma = 0.1;  // fixed, not sampled
};

/// One realized draw.
struct EotParams {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double shear_x = 0.0;
  double shear_y = 0.0;
  double brightness_delta = 0.0;
  double contrast_factor = 1.0;
  double noise_sigma = 0.0;

  nlohmann::ordered_json to_json() const;
  static EotParams from_json(const nlohmann::json& doc);
};

/// Uniform draw of every field over its configured range. Draw order is
/// fixed (rotation, scale, shear x, shear y, brightness, contrast) and part
/// of the reproducibility contract.
EotParams sample_eot(Rng& rng, const EotConfig& cfg = {});

struct EotResult {
  Var patch;
  int64_t side = 0;
  bool scale_clamped = false;
};

/// Geometric warp (rotate + shear + scale, inverse affine mapping with
/// edge-clamped bilinear sampling) followed by photometrics:
/// clip(contrast * (x - 0.5) + 0.5 + brightness + noise). The output side is
/// round(side * scale), optionally clamped to max_side (0 disables; a clamp
/// hit is flagged, not an error). Noise comes from `noise_rng`, one normal
/// per output value.
EotResult apply_eot(const Var& patch, const EotParams& params, Rng& noise_rng, int64_t max_side = 0);

}  // namespace patchforge
