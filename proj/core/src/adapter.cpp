// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/adapter.hpp"

#include <cstdlib>

#include <fmt/format.h>

#include "patchforge/errors.hpp"
#include "patchforge/rng.hpp"

namespace patchforge {
namespace {

VitConfig vit_b16_config() {
  return VitConfig{};  // 224 px, 16 px patches, 768 wide, 12 heads, 12 layers
}

VitConfig toy_config() {
  VitConfig cfg;
  cfg.image_size = 64;
  cfg.patch_size = 8;
  cfg.hidden_dim = 32;
  cfg.num_heads = 4;
  cfg.num_layers = 2;
  cfg.mlp_dim = 128;
  return cfg;
}

std::vector<BackboneInfo> build_registry() {
  std::vector<BackboneInfo> reg;
  reg.push_back({"vit-base-224", vit_b16_config(), Normalization::half(), 4015, false, false});
  reg.push_back({"vit-base-224-in21k", vit_b16_config(), Normalization::half(), 3024, false, false});
  reg.push_back({"dino-vitb16", vit_b16_config(), Normalization::imagenet(), 3039, false, false});
  reg.push_back({"dinov3-vitb16", vit_b16_config(), Normalization::imagenet(), 5328, true, false});
  reg.push_back({"toy-vit", toy_config(), Normalization::half(), 50, false, true});
  return reg;
}

}  // namespace

const std::vector<BackboneInfo>& backbone_registry() {
  static const std::vector<BackboneInfo> reg = build_registry();
  return reg;
}

const BackboneInfo& backbone_info(const std::string& id) {
  std::string known;
  for (const auto& info : backbone_registry()) {
    if (info.id == id) return info;
    known += known.empty() ? info.id : ", " + info.id;
  }
  throw UserError(fmt::format("unknown backbone '{}'; valid keys: {}", id, known));
}

std::filesystem::path backbone_cache_path(const std::string& id) {
  const char* env = std::getenv("PATCHFORGE_CACHE");
  const std::filesystem::path dir = env && *env ? env : "cache";
  return dir / (id + ".pfck");
}

ClassifierModel::ClassifierModel(VitModel model, std::string backbone_id, Normalization normalization)
    : model_(std::move(model)), backbone_id_(std::move(backbone_id)), normalization_(normalization) {
  if (model_.config().num_classes != 2) {
    throw Error(fmt::format("classifier needs a 2-logit head, got {}", model_.config().num_classes));
  }
}

Var ClassifierModel::forward_logits(const Var& images) const {
  return model_.forward(normalization_.apply(images));
}

Var ClassifierModel::forward_person_prob(const Var& images) const {
  Var probs = softmax_lastdim(forward_logits(images));
  const int64_t b = probs.shape()[0];
  return reshape(narrow(probs, 1, kPersonClassIndex, 1), {b});
}

std::vector<double> ClassifierModel::person_probs(const Tensor& images) const {
  NoGradGuard guard;
  Var out = forward_person_prob(Var(images.clone()));
  const double* d = out.value().data();
  return std::vector<double>(d, d + out.numel());
}

ClassifierModel load_backbone(const std::string& id, uint64_t seed) {
  const BackboneInfo& info = backbone_info(id);
  Rng master(seed);

  if (info.builtin) {
    VitModel model = VitModel::random_init(info.config, master.child(0).seed());
    model.reinit_head(master.child(1).seed());
    return ClassifierModel(std::move(model), id, info.normalization);
  }

  const std::filesystem::path path = backbone_cache_path(id);
  if (!std::filesystem::exists(path)) {
    throw UserError(fmt::format(
        "backbone checkpoint '{}' not found; convert the pretrained weights with tools/convert_hf_vit.py "
        "into the cache directory (override with PATCHFORGE_CACHE)",
        path.string()));
  }
  LoadedCheckpoint loaded = load_checkpoint(path);
  const VitConfig& got = loaded.model.config();
  const VitConfig& want = info.config;
  const bool geometry_ok = got.image_size == want.image_size && got.patch_size == want.patch_size &&
                           got.hidden_dim == want.hidden_dim && got.num_heads == want.num_heads &&
                           got.mlp_dim == want.mlp_dim &&
                           (info.dynamic_depth || got.num_layers == want.num_layers);
  if (!geometry_ok) {
    throw Error(fmt::format("checkpoint '{}' does not match the {} geometry", path.string(), id));
  }
  loaded.model.reinit_head(master.child(1).seed());
  return ClassifierModel(std::move(loaded.model), id, loaded.meta.normalization);
}

}  // namespace patchforge
