// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchforge/adapter.hpp"
#include "patchforge/crease.hpp"
#include "patchforge/data.hpp"
#include "patchforge/eot.hpp"
#include "patchforge/losses.hpp"
#include "patchforge/patch_state.hpp"
#include "patchforge/placement.hpp"

namespace patchforge {

struct CraftConfig {
  int64_t steps = 0;  // 0 = use the backbone's published step count
  double learning_rate = 1e-3;
  int64_t batch_size = 32;
  uint64_t seed = 2;
  double area_clamp = 0.60;  // EOT upscaling never exceeds this area share
  int64_t patch_side = 128;
  LossWeights weights;
  LossSign sign = LossSign::prose;
  EotConfig eot;
  CreaseConfig crease;

  nlohmann::ordered_json to_json() const;
  uint64_t hash() const;  // FNV-1a of the JSON dump, recorded in patch.meta
};

/// Per-item transform record. stream_seed reconstructs the item's rng (the
/// noise draw included), so a trace row is enough to replay the step.
struct CraftItemTrace {
  uint64_t stream_seed = 0;
  int64_t image_index = 0;  // into the person-filtered attack subset
  EotParams eot;
  CreaseSpec crease;
  Placement placement;
  bool scale_clamped = false;

  nlohmann::ordered_json to_json() const;
  static CraftItemTrace from_json(const nlohmann::json& doc);
};

struct TraceRow {
  int64_t step = 0;  // 1-based
  LossBreakdown loss;
  double mean_person_prob = 0.0;
  std::vector<CraftItemTrace> items;

  nlohmann::ordered_json to_json() const;
  static TraceRow from_json(const nlohmann::json& doc);
};

struct CraftTrace {
  std::vector<TraceRow> rows;

  void save(const std::filesystem::path& path) const;  // one JSON row per line
  static CraftTrace load(const std::filesystem::path& path);
};

struct CraftResult {
  PatchState patch;
  CraftTrace trace;
  int64_t steps_run = 0;
};

/// Optimize a patch against the model on person-class crops.
///
/// Each step samples, per batch item, an EOT draw, one crease, and a random
/// placement; the batch of patched images goes through the classifier and
/// the composite loss drives an Adam update on the patch pixels only,
/// followed by projection back to [0,1]. Model weights are untouched
/// (hash-checked). Non-person crops in the subset are ignored; a subset
/// with no person crops is an error.
///
/// `replay` re-runs recorded per-item parameters (and noise streams)
/// instead of sampling, reproducing the recorded loss sequence. When
/// `live_trace_path` is set, every row is appended to that file as soon as
/// it is produced, so an abort (e.g. non-finite loss) leaves the full
/// trace on disk.
CraftResult craft(ClassifierModel& model, const LabeledImages& attack_subset, const CraftConfig& cfg,
                  std::optional<PatchState> init = std::nullopt, const CraftTrace* replay = nullptr,
                  const std::filesystem::path& live_trace_path = {});

}  // namespace patchforge
