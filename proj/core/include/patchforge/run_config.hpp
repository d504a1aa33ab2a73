// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "patchforge/crafter.hpp"
#include "patchforge/eval.hpp"
#include "patchforge/ini.hpp"
#include "patchforge/trainer.hpp"

namespace patchforge {

struct DataConfig {
  std::string annotations;  // COCO-style JSON
  std::string images;       // source image directory
  int64_t train = 0;        // images per split, both classes combined
  int64_t val = 0;
  int64_t test = 0;
  double padding_fraction = 0.15;
};

/// Fully resolved run configuration. Defaults are the published values:
/// beta 4, gamma 0.5, fine-tune lr 1e-4, craft lr 1e-3, batch 128, seed 2.
/// The global seed feeds every section that does not override it.
struct RunConfig {
  uint64_t seed = 2;
  std::string backbone = "toy-vit";
  DataConfig data;
  TrainConfig finetune;
  std::string freeze = "auto";  // auto | paper | none | <last frozen layer>
  CraftConfig craft;
  int64_t attack_subset = 0;  // 0 = use every eligible crop
  std::string attack_subset_source = "held_out";  // held_out | train
  EvalConfig eval;
  int64_t exemplars = 0;

  /// Parse + validate; unknown keys and out-of-range values throw
  /// UserError naming the offending key.
  static RunConfig from_ini(const IniFile& ini);
  static RunConfig load(const std::filesystem::path& path);

  /// Resolve the freeze policy against a concrete encoder depth.
  FreezePlan freeze_plan(int64_t num_layers) const;

  /// The fully resolved config as INI text, reusable via --config.
  std::string to_ini_text() const;
};

}  // namespace patchforge
