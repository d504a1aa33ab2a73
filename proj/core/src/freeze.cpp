// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/freeze.hpp"

#include <string>

#include <fmt/format.h>

#include "patchforge/errors.hpp"

namespace patchforge {

FreezePlan FreezePlan::standard(int64_t frozen_through) {
  FreezePlan plan;
  plan.freeze_patch_embedding = true;
  plan.freeze_positional_embedding = true;
  for (int64_t i = 0; i <= frozen_through; ++i) plan.frozen_encoder_layers.insert(i);
  plan.train_classifier_head = true;
  return plan;
}

nlohmann::ordered_json FreezePlan::to_json() const {
  nlohmann::ordered_json doc;
  doc["freeze_patch_embedding"] = freeze_patch_embedding;
  doc["freeze_positional_embedding"] = freeze_positional_embedding;
  doc["frozen_encoder_layers"] = frozen_encoder_layers;
  doc["train_classifier_head"] = train_classifier_head;
  return doc;
}

FreezePlan FreezePlan::from_json(const nlohmann::json& doc) {
  FreezePlan plan;
  plan.freeze_patch_embedding = doc.at("freeze_patch_embedding").get<bool>();
  plan.freeze_positional_embedding = doc.at("freeze_positional_embedding").get<bool>();
  for (const auto& v : doc.at("frozen_encoder_layers")) {
    plan.frozen_encoder_layers.insert(v.get<int64_t>());
  }
  plan.train_classifier_head = doc.at("train_classifier_head").get<bool>();
  return plan;
}

void apply_freeze_plan(VitModel& model, const FreezePlan& plan) {
  const int64_t num_layers = model.config().num_layers;
  for (int64_t idx : plan.frozen_encoder_layers) {
    if (idx < 0 || idx >= num_layers) {
      throw Error(fmt::format("freeze plan names encoder layer {} but the model has layers 0..{}", idx,
                              num_layers - 1));
    }
  }
  const bool last_frozen = plan.frozen_encoder_layers.count(num_layers - 1) > 0;

  for (auto& [name, var] : model.params()) {
    bool frozen = false;
    if (name.starts_with("patch_embed.")) {
      frozen = plan.freeze_patch_embedding;
    } else if (name == "cls_token" || name == "pos_embed") {
      frozen = plan.freeze_positional_embedding;
    } else if (name.starts_with("encoder.")) {
      const size_t dot = name.find('.', 8);
      const int64_t idx = std::stoll(name.substr(8, dot - 8));
      frozen = plan.frozen_encoder_layers.count(idx) > 0;
    } else if (name.starts_with("final_norm.")) {
      frozen = last_frozen;
    } else if (name.starts_with("head.")) {
      frozen = !plan.train_classifier_head;
    }
    var.set_requires_grad(!frozen);
  }
}

std::vector<std::string> trainable_params(const VitModel& model) {
  std::vector<std::string> names;
  for (const auto& [name, var] : model.params()) {
    if (var.requires_grad()) names.push_back(name);
  }
  return names;
}

}  // namespace patchforge
