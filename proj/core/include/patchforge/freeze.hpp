// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>

#include <nlohmann/json.hpp>

#include "patchforge/vit.hpp"

namespace patchforge {

/// Which parameter groups stay fixed during fine-tuning.
/// freeze_positional_embedding covers both pos_embed and the class token.
/// The final norm follows the last encoder layer: it is frozen exactly when
/// that layer is frozen, which keeps "freeze everything but the head" and
/// the standard freeze-lower-layers plan both expressible.
struct FreezePlan {
  bool freeze_patch_embedding = false;
  bool freeze_positional_embedding = false;
  std::set<int64_t> frozen_encoder_layers;
  bool train_classifier_head = true;

  /// Embeddings plus encoder layers 0..7 frozen, head trainable.
  static FreezePlan standard(int64_t frozen_through = 7);

  nlohmann::ordered_json to_json() const;
  static FreezePlan from_json(const nlohmann::json& doc);
};

/// Mark parameters trainable/frozen per the plan. Throws if the plan names
/// a layer the model does not have.
void apply_freeze_plan(VitModel& model, const FreezePlan& plan);

/// Names of parameters the plan leaves trainable, in model order.
std::vector<std::string> trainable_params(const VitModel& model);

}  // namespace patchforge
