// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchforge/autodiff.hpp"
#include "patchforge/rng.hpp"

namespace patchforge {

struct VitConfig {
  int64_t image_size = 224;
  int64_t patch_size = 16;
  int64_t hidden_dim = 768;
  int64_t num_heads = 12;
  int64_t num_layers = 12;
  int64_t mlp_dim = 3072;
  int64_t num_classes = 2;
  double ln_eps = 1e-12;

  int64_t tokens() const {  // including the class token
    const int64_t g = image_size / patch_size;
    return g * g + 1;
  }

  nlohmann::ordered_json to_json() const;
  static VitConfig from_json(const nlohmann::json& doc);
};

/// Pre-LN vision transformer with a class-token head. Parameters are
/// named leaves (weight layout: linear weights are (in, out)):
///   patch_embed.weight/.bias, cls_token, pos_embed,
///   encoder.<i>.ln1|ln2.weight/.bias,
///   encoder.<i>.attn.q|k|v|out.weight/.bias,
///   encoder.<i>.mlp.fc1|fc2.weight/.bias,
///   final_norm.weight/.bias, head.weight/.bias
class VitModel {
 public:
  explicit VitModel(VitConfig cfg);  // zero-initialized parameters

  /// Truncated-normal(0.02) weights, zero biases, unit LayerNorm scales.
  static VitModel random_init(VitConfig cfg, uint64_t seed);

  const VitConfig& config() const { return cfg_; }

  /// Stable enumeration order; the checkpoint payload follows it.
  const std::vector<std::pair<std::string, Var>>& params() const { return params_; }
  std::vector<std::pair<std::string, Var>>& params() { return params_; }
  Var param(const std::string& name) const;  // throws on unknown name
  bool has_param(const std::string& name) const;

  /// (B, 3, S, S) pixels (already normalized) -> (B, num_classes) logits.
  Var forward(const Var& images) const;

  /// Seeded re-initialization of the classifier head only.
  void reinit_head(uint64_t seed);

  /// FNV-1a over every parameter payload in enumeration order.
  uint64_t weights_hash() const;

 private:
  VitConfig cfg_;
  std::vector<std::pair<std::string, Var>> params_;

  void build_params();
};

}  // namespace patchforge
