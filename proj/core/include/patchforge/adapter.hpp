// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "patchforge/checkpoint.hpp"
#include "patchforge/normalization.hpp"
#include "patchforge/vit.hpp"

namespace patchforge {

/// Registry entry for a supported backbone. `dynamic_depth` relaxes the
/// encoder-depth check for families whose published checkpoints differ from
/// stock ViT-B/16 in layer count only; patch size and input geometry are
/// always enforced.
struct BackboneInfo {
  std::string id;
  VitConfig config;
  Normalization normalization;
  int64_t default_craft_steps = 0;
  bool dynamic_depth = false;
  bool builtin = false;  // constructed in-process, no checkpoint file needed
};

const std::vector<BackboneInfo>& backbone_registry();

/// Throws UserError naming the valid keys when `id` is unknown.
const BackboneInfo& backbone_info(const std::string& id);

/// $PATCHFORGE_CACHE/<id>.pfck (default cache dir: ./cache).
std::filesystem::path backbone_cache_path(const std::string& id);

/// Binary person/non-person classifier: a ViT backbone, its pixel
/// normalization, and the convention that class 1 is "person". Inputs are
/// raw [0,1] batches; normalization happens inside the forward pass.
class ClassifierModel {
 public:
  static constexpr int64_t kPersonClassIndex = 1;

  ClassifierModel(VitModel model, std::string backbone_id, Normalization normalization);

  /// (B,3,S,S) in [0,1] -> (B,2) logits. Differentiable w.r.t. pixels.
  Var forward_logits(const Var& images) const;
  /// (B,3,S,S) in [0,1] -> (B,) person-class probabilities.
  Var forward_person_prob(const Var& images) const;
  /// Inference-only convenience: no graph, plain numbers out.
  std::vector<double> person_probs(const Tensor& images) const;

  VitModel& model() { return model_; }
  const VitModel& model() const { return model_; }
  const std::string& backbone_id() const { return backbone_id_; }
  const Normalization& normalization() const { return normalization_; }

 private:
  VitModel model_;
  std::string backbone_id_;
  Normalization normalization_;
};

/// Loads backbone weights from the cache (or constructs the built-in
/// toy backbone in-process) and attaches a freshly seeded binary head.
/// The same (id, seed) pair always yields bit-identical weights.
ClassifierModel load_backbone(const std::string& id, uint64_t seed);

}  // namespace patchforge
