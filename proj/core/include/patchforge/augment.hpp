// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "patchforge/rng.hpp"
#include "patchforge/tensor.hpp"

namespace patchforge {

/// Training-time augmentation: horizontal flip, additive brightness in
/// [-brightness_jitter, +brightness_jitter], multiplicative contrast in
/// [1-contrast_jitter, 1+contrast_jitter] about a 0.5 pivot.
struct AugConfig {
  double hflip_prob = 0.5;
  double brightness_jitter = 0.1;
  double contrast_jitter = 0.1;
};

/// Augment a (B,3,H,W) batch. Every image consumes exactly three draws
/// (flip, brightness, contrast) in that order regardless of the flip
/// outcome, so the stream position never depends on sampled values.
/// Output is clipped to [0,1].
Tensor augment_batch(const Tensor& images, const AugConfig& cfg, Rng& rng);

}  // namespace patchforge
