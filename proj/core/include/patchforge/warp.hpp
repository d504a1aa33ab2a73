// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "patchforge/autodiff.hpp"
#include "patchforge/tensor.hpp"

namespace patchforge {

/// Source-coordinate grid (2, out_h, out_w) for a bilinear resize with
/// half-pixel centers: src = (dst + 0.5) * (src_size / out_size) - 0.5.
Tensor resize_coords(int64_t src_h, int64_t src_w, int64_t out_h, int64_t out_w);

/// Differentiable bilinear resize of a (C, H, W) image.
Var resize_image(const Var& image, int64_t out_h, int64_t out_w);

}  // namespace patchforge
