// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "patchforge/tensor.hpp"

namespace patchforge {

/// The optimized artifact: patch pixels plus the similarity reference N
/// (Eq. 4 keeps the patch close to N, usually its own initialization).
struct PatchState {
  Tensor pixels;     // (3, side, side), kept in [0,1]
  Tensor reference;  // N, same shape
  int64_t step = 0;
  uint64_t seed = 2;
};

/// Mid-gray (0.5) initialization; reference = the same mid-gray.
PatchState init_patch(int64_t side = 128, uint64_t seed = 2);

/// Initialize from an image (resized to side x side); reference = pixels.
PatchState init_patch_from(const Tensor& reference_image, int64_t side = 128, uint64_t seed = 2);

/// side^2 / image_size^2: the patch's design-time share of the model input
/// (128 on 224 gives ~0.3265, i.e. roughly 30% of the input area).
double patch_design_area_fraction(int64_t side, int64_t image_size = 224);

/// Everything the sidecar records about how the patch was made.
struct PatchMeta {
  uint64_t seed = 2;
  int64_t steps = 0;
  std::string config_hash;       // hex64 of the crafting config JSON
  std::string source_model_id;   // backbone the patch was crafted against
  double design_area_fraction = 0.0;

  nlohmann::ordered_json to_json() const;
  static PatchMeta from_json(const nlohmann::json& doc);
};

/// Write dir/patch.png (16-bit raster of the pixels) and dir/patch.meta
/// (JSON sidecar holding the exact f64 pixel and reference payloads plus
/// the metadata above). The raster is a lossless encoding of the pixels on
/// the 16-bit palette; the sidecar round-trips the doubles bit-exactly.
void export_patch(const PatchState& state, const PatchMeta& meta, const std::filesystem::path& dir);

struct ImportedPatch {
  PatchState state;
  PatchMeta meta;
};

/// Load a patch artifact. Accepts the export directory, the patch.png path,
/// or any plain PNG; when the sidecar is present pixels are restored
/// bit-exactly, otherwise they come from the raster and the reference
/// defaults to the pixels themselves.
ImportedPatch import_patch(const std::filesystem::path& path);

}  // namespace patchforge
