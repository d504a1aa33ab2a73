// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/vit.hpp"

#include <cmath>

#include <fmt/format.h>

#include "patchforge/errors.hpp"
#include "patchforge/hash.hpp"

namespace patchforge {

nlohmann::ordered_json VitConfig::to_json() const {
  return nlohmann::ordered_json{{"image_size", image_size}, {"patch_size", patch_size}, {"hidden_dim", hidden_dim},
                                {"num_heads", num_heads},   {"num_layers", num_layers}, {"mlp_dim", mlp_dim},
                                {"num_classes", num_classes}, {"ln_eps", ln_eps}};
}

VitConfig VitConfig::from_json(const nlohmann::json& doc) {
  VitConfig c;
  c.image_size = doc.at("image_size").get<int64_t>();
  c.patch_size = doc.at("patch_size").get<int64_t>();
  c.hidden_dim = doc.at("hidden_dim").get<int64_t>();
  c.num_heads = doc.at("num_heads").get<int64_t>();
  c.num_layers = doc.at("num_layers").get<int64_t>();
  c.mlp_dim = doc.at("mlp_dim").get<int64_t>();
  c.num_classes = doc.at("num_classes").get<int64_t>();
  c.ln_eps = doc.at("ln_eps").get<double>();
  return c;
}

VitModel::VitModel(VitConfig cfg) : cfg_(cfg) {
  if (cfg_.image_size % cfg_.patch_size != 0) {
    throw Error(fmt::format("patch size {} does not divide image size {}", cfg_.patch_size, cfg_.image_size));
  }
  if (cfg_.hidden_dim % cfg_.num_heads != 0) {
    throw Error(fmt::format("hidden dim {} not divisible by {} heads", cfg_.hidden_dim, cfg_.num_heads));
  }
  build_params();
}

void VitModel::build_params() {
  const int64_t e = cfg_.hidden_dim;
  const int64_t d_in = 3 * cfg_.patch_size * cfg_.patch_size;
  auto add = [&](const std::string& name, Shape shape) {
    params_.emplace_back(name, Var(Tensor(std::move(shape)), true, name));
  };
  add("patch_embed.weight", {d_in, e});
  add("patch_embed.bias", {e});
  add("cls_token", {e});
  add("pos_embed", {cfg_.tokens(), e});
  for (int64_t i = 0; i < cfg_.num_layers; ++i) {
    const std::string p = fmt::format("encoder.{}.", i);
    add(p + "ln1.weight", {e});
    add(p + "ln1.bias", {e});
    for (const char* part : {"q", "k", "v", "out"}) {
      add(p + "attn." + part + ".weight", {e, e});
      add(p + "attn." + part + ".bias", {e});
    }
    add(p + "ln2.weight", {e});
    add(p + "ln2.bias", {e});
    add(p + "mlp.fc1.weight", {e, cfg_.mlp_dim});
    add(p + "mlp.fc1.bias", {cfg_.mlp_dim});
    add(p + "mlp.fc2.weight", {cfg_.mlp_dim, e});
    add(p + "mlp.fc2.bias", {e});
  }
  add("final_norm.weight", {e});
  add("final_norm.bias", {e});
  add("head.weight", {e, cfg_.num_classes});
  add("head.bias", {cfg_.num_classes});
}

namespace {

// Normal(0, std) redrawn outside 2 std, the usual transformer init.
void trunc_normal_fill(Tensor& t, Rng& rng, double std_dev) {
  for (int64_t i = 0; i < t.numel(); ++i) {
    double v = rng.normal(0.0, std_dev);
    while (std::abs(v) > 2.0 * std_dev) v = rng.normal(0.0, std_dev);
    t[i] = v;
  }
}

bool is_norm_weight(const std::string& name) {
  return name.ends_with("ln1.weight") || name.ends_with("ln2.weight") || name == "final_norm.weight";
}

}  // namespace

VitModel VitModel::random_init(VitConfig cfg, uint64_t seed) {
  VitModel m(cfg);
  Rng rng(seed);
  for (auto& [name, var] : m.params_) {
    Tensor& t = var.value();
    if (is_norm_weight(name)) {
      t.fill(1.0);
    } else if (name.ends_with(".bias")) {
      t.fill(0.0);
    } else {
      trunc_normal_fill(t, rng, 0.02);
    }
  }
  return m;
}

Var VitModel::param(const std::string& name) const {
  for (const auto& [n, v] : params_) {
    if (n == name) return v;
  }
  throw Error(fmt::format("unknown parameter '{}'", name));
}

bool VitModel::has_param(const std::string& name) const {
  for (const auto& [n, v] : params_) {
    if (n == name) return true;
  }
  return false;
}

void VitModel::reinit_head(uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, var] : params_) {
    if (name == "head.weight") {
      trunc_normal_fill(var.value(), rng, 0.02);
    } else if (name == "head.bias") {
      var.value().fill(0.0);
    }
  }
}

uint64_t VitModel::weights_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, var] : params_) {
    h = fnv1a64(name.data(), name.size(), h);
    const Tensor& t = var.value();
    h = fnv1a64(t.data(), static_cast<size_t>(t.numel()) * sizeof(double), h);
  }
  return h;
}

Var VitModel::forward(const Var& images) const {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.image_size || s[3] != cfg_.image_size) {
    throw Error(fmt::format("forward: expected (B,3,{},{}) batch, got {}", cfg_.image_size, cfg_.image_size,
                            shape_str(s)));
  }
  const int64_t b = s[0];
  const int64_t e = cfg_.hidden_dim;
  const int64_t heads = cfg_.num_heads;
  const int64_t dh = e / heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Var tokens = image_to_tokens(images, cfg_.patch_size);                     // (B, T-1, 3p^2)
  Var emb = linear(tokens, param("patch_embed.weight"), param("patch_embed.bias"));  // (B, T-1, E)

  Var cls_row = reshape(param("cls_token"), {1, e});
  std::vector<Var> cls_items(static_cast<size_t>(b), cls_row);
  Var cls = stack0(cls_items);  // (B, 1, E)

  Var seq = add(concat(cls, emb, 1), param("pos_embed"));  // (B, T, E)
  const int64_t t = cfg_.tokens();

  for (int64_t i = 0; i < cfg_.num_layers; ++i) {
    const std::string p = fmt::format("encoder.{}.", i);
    Var h = layer_norm(seq, param(p + "ln1.weight"), param(p + "ln1.bias"), cfg_.ln_eps);
    auto split_heads = [&](const Var& x) {
      return permute(reshape(x, {b, t, heads, dh}), {0, 2, 1, 3});  // (B, H, T, dh)
    };
    Var q = split_heads(linear(h, param(p + "attn.q.weight"), param(p + "attn.q.bias")));
    Var k = split_heads(linear(h, param(p + "attn.k.weight"), param(p + "attn.k.bias")));
    Var v = split_heads(linear(h, param(p + "attn.v.weight"), param(p + "attn.v.bias")));
    Var logits = scale(matmul(q, transpose_last2(k)), attn_scale);  // (B, H, T, T)
    Var attn = softmax_lastdim(logits);
    Var ctx = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {b, t, e});
    Var o = linear(ctx, param(p + "attn.out.weight"), param(p + "attn.out.bias"));
    seq = add(seq, o);

    Var h2 = layer_norm(seq, param(p + "ln2.weight"), param(p + "ln2.bias"), cfg_.ln_eps);
    Var m = linear(gelu(linear(h2, param(p + "mlp.fc1.weight"), param(p + "mlp.fc1.bias"))),
                   param(p + "mlp.fc2.weight"), param(p + "mlp.fc2.bias"));
    seq = add(seq, m);
  }

  seq = layer_norm(seq, param("final_norm.weight"), param("final_norm.bias"), cfg_.ln_eps);
  Var cls_out = reshape(narrow(seq, 1, 0, 1), {b, e});
  return linear(cls_out, param("head.weight"), param("head.bias"));
}

}  // namespace patchforge
