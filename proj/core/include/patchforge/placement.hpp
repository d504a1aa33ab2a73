// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include "patchforge/autodiff.hpp"
#include "patchforge/rng.hpp"

namespace patchforge {

struct Placement {
  int64_t x = 0;  // top-left, image coordinates
  int64_t y = 0;
  int64_t side = 0;  // realized square patch size
  int64_t image_w = 0;
  int64_t image_h = 0;
  double area_fraction = 0.0;  // realized side^2 / (w*h)

  nlohmann::ordered_json to_json() const;
  static Placement from_json(const nlohmann::json& doc);
};

/// Square patch side for an area fraction: floor(sqrt(f * W * H)).
int64_t side_for_area_fraction(double fraction, int64_t image_w, int64_t image_h);

/// Paste the patch at a uniform-random position fully inside the image,
/// keeping the patch's current size (the crafting path, where EOT already
/// scaled it). Draw order: x then y.
std::pair<Var, Placement> place_patch(const Var& image, const Var& patch, Rng& rng);

/// Draw an area fraction uniform in [frac_min, frac_max], resize the patch
/// to the matching side, then place as above (the evaluation path).
/// Draw order: fraction, x, y.
std::pair<Var, Placement> place_patch_resized(const Var& image, const Var& patch, Rng& rng, double frac_min,
                                              double frac_max);

/// Deterministic variant used for trace replay: paste at a recorded
/// placement, resizing the patch to placement.side if needed.
std::pair<Var, Placement> place_patch_at(const Var& image, const Var& patch, const Placement& placement);

}  // namespace patchforge
