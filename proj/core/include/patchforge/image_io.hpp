// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "patchforge/tensor.hpp"

namespace patchforge {

/// Images are (3, H, W) RGB doubles in [0,1] everywhere in this codebase.

/// Decode PNG/JPEG. 8-bit rasters map 255 -> 1.0, 16-bit map 65535 -> 1.0.
Tensor load_image(const std::filesystem::path& path);

/// Encode 8-bit RGB PNG (values clamped to [0,1] then scaled by 255).
void save_png(const std::filesystem::path& path, const Tensor& image);

/// Encode 16-bit RGB PNG; keeps ~4.8 decimal digits per channel.
void save_png16(const std::filesystem::path& path, const Tensor& image);

/// Bilinear resize with half-pixel-center coordinates, the same convention
/// the differentiable placement path uses.
Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w);

}  // namespace patchforge
