// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "patchforge/freeze.hpp"
#include "patchforge/normalization.hpp"
#include "patchforge/vit.hpp"

namespace patchforge {

/// Everything a checkpoint stores besides the model geometry and weights.
/// `metrics` is an optional free-form snapshot (e.g. the validation metrics
/// of the saved epoch); leave it null when there is nothing to record.
struct CheckpointMeta {
  std::string backbone_id;
  FreezePlan freeze_plan;
  uint64_t seed = 0;
  Normalization normalization;
  nlohmann::ordered_json metrics;
};

struct LoadedCheckpoint {
  VitModel model;
  CheckpointMeta meta;
};

/// Single-file container:
///   bytes 0..7   magic "PFCKPT01"
///   bytes 8..15  metadata length (u64, little endian)
///   metadata     JSON (format tag, backbone id, model config, freeze plan,
///                seed, normalization, metrics, tensor index, payload hash)
///   payload      every parameter as f64 little endian, enumeration order
/// The file is written to a temporary sibling and renamed into place, so a
/// failed save never leaves a partial checkpoint behind.
void save_checkpoint(const VitModel& model, const CheckpointMeta& meta, const std::filesystem::path& path);

/// Rebuilds the model from the stored config, restores weights bit-exactly,
/// and re-applies the stored freeze plan. Truncation, magic/format/shape
/// mismatches, and payload hash mismatches all throw; a load never returns
/// a partially filled model.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace patchforge
