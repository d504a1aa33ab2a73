// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "patchforge/adapter.hpp"
#include "patchforge/checkpoint.hpp"
#include "patchforge/errors.hpp"
#include "patchforge/freeze.hpp"
#include "patchforge/normalization.hpp"
#include "patchforge/vit.hpp"
#include "test_util.hpp"

using namespace patchforge;

namespace {

VitConfig toy_config() {
  VitConfig cfg;
  cfg.image_size = 32;
  cfg.patch_size = 8;
  cfg.hidden_dim = 16;
  cfg.num_heads = 2;
  cfg.num_layers = 2;
  cfg.mlp_dim = 32;
  return cfg;
}

/// Independent statement of the freeze rules, by name only.
bool oracle_frozen(const std::string& name, const FreezePlan& plan, int64_t num_layers) {
  if (name.rfind("patch_embed.", 0) == 0) return plan.freeze_patch_embedding;
  if (name == "cls_token" || name == "pos_embed") return plan.freeze_positional_embedding;
  if (name.rfind("encoder.", 0) == 0) {
    const size_t dot = name.find('.', 8);
    const int64_t layer = std::stoll(name.substr(8, dot - 8));
    return plan.frozen_encoder_layers.count(layer) > 0;
  }
  if (name.rfind("final_norm.", 0) == 0) return plan.frozen_encoder_layers.count(num_layers - 1) > 0;
  if (name.rfind("head.", 0) == 0) return !plan.train_classifier_head;
  return false;
}

}  // namespace

TEST_CASE("backbone registry knows its ids and rejects others") {
  const BackboneInfo& base = backbone_info("vit-base-224");
  CHECK(base.config.image_size == 224);
  CHECK(base.config.patch_size == 16);
  CHECK(base.config.hidden_dim == 768);
  CHECK(base.config.num_layers == 12);
  CHECK(base.default_craft_steps == 4015);
  CHECK_FALSE(base.builtin);

  CHECK(backbone_info("vit-base-224-in21k").default_craft_steps == 3024);
  CHECK(backbone_info("dino-vitb16").default_craft_steps == 3039);
  CHECK(backbone_info("dinov3-vitb16").default_craft_steps == 5328);
  CHECK(backbone_info("dinov3-vitb16").dynamic_depth);
  CHECK(backbone_info("toy-vit").builtin);
  CHECK(backbone_info("toy-vit").config.image_size == 64);

  CHECK_THROWS_AS(backbone_info("resnet50"), UserError);
  try {
    backbone_info("resnet50");
  } catch (const UserError& e) {
    CHECK(std::string(e.what()).find("toy-vit") != std::string::npos);
  }
}

TEST_CASE("builtin backbone load is seed deterministic") {
  const ClassifierModel a = load_backbone("toy-vit", 2);
  const ClassifierModel b = load_backbone("toy-vit", 2);
  const ClassifierModel c = load_backbone("toy-vit", 3);
  CHECK(a.model().weights_hash() == b.model().weights_hash());
  CHECK(a.model().weights_hash() != c.model().weights_hash());
  CHECK(a.backbone_id() == "toy-vit");
}

TEST_CASE("missing pretrained checkpoint names the converter") {
  setenv("PATCHFORGE_CACHE", "/nonexistent-cache", 1);
  try {
    load_backbone("vit-base-224", 2);
    FAIL("expected UserError");
  } catch (const UserError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("convert_hf_vit.py") != std::string::npos);
    CHECK(msg.find("PATCHFORGE_CACHE") != std::string::npos);
  }
  unsetenv("PATCHFORGE_CACHE");
}

TEST_CASE("classifier forward produces a proper two-class distribution") {
  const ClassifierModel model = load_backbone("toy-vit", 2);
  const int64_t s = model.model().config().image_size;
  const Tensor batch = testutil::random_tensor({3, 3, s, s}, 5);

  NoGradGuard guard;
  const Var logits = model.forward_logits(Var(batch));
  REQUIRE(logits.shape() == Shape{3, 2});

  const Var probs = model.forward_person_prob(Var(batch));
  REQUIRE(probs.shape() == Shape{3});
  const std::vector<double> raw = model.person_probs(batch);
  REQUIRE(raw.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(raw[i] >= 0.0);
    CHECK(raw[i] <= 1.0);
    CHECK(raw[i] == doctest::Approx(probs.value().storage()[i]).epsilon(1e-12));
  }
}

TEST_CASE("normalization shifts and scales per channel") {
  Normalization norm;
  norm.mean = {0.1, 0.2, 0.3};
  norm.stddev = {0.5, 0.25, 1.0};
  Tensor x = Tensor::full({1, 3, 2, 2}, 0.6);
  const Var out = norm.apply(Var(x));
  CHECK(out.value().at({0, 0, 0, 0}) == doctest::Approx((0.6 - 0.1) / 0.5));
  CHECK(out.value().at({0, 1, 0, 0}) == doctest::Approx((0.6 - 0.2) / 0.25));
  CHECK(out.value().at({0, 2, 0, 0}) == doctest::Approx((0.6 - 0.3) / 1.0));

  CHECK(Normalization::half().apply(Var(Tensor::full({1, 3, 1, 1}, 0.5))).value().at({0, 0, 0, 0}) ==
        doctest::Approx(0.0));

  const Normalization imagenet = Normalization::imagenet();
  CHECK(imagenet.mean[0] == doctest::Approx(0.485));
  CHECK(imagenet.stddev[2] == doctest::Approx(0.225));

  Normalization bad;
  bad.stddev = {0.5, 0.0, 0.5};
  CHECK_THROWS_AS(bad.apply(Var(Tensor::full({1, 3, 1, 1}, 0.5))), Error);

  const Normalization round = Normalization::from_json(imagenet.to_json());
  CHECK(round.mean == imagenet.mean);
  CHECK(round.stddev == imagenet.stddev);
}

TEST_CASE("freeze plan matches a name-based oracle on every parameter") {
  VitModel model = VitModel::random_init(toy_config(), 7);
  const int64_t layers = model.config().num_layers;

  std::vector<FreezePlan> plans;
  plans.push_back(FreezePlan{});                 // nothing frozen
  plans.push_back(FreezePlan::standard(0));      // embeddings + layer 0
  plans.push_back(FreezePlan::standard(layers - 1));  // everything but head
  FreezePlan no_head = FreezePlan::standard(0);
  no_head.train_classifier_head = false;
  plans.push_back(no_head);
  FreezePlan only_embed;
  only_embed.freeze_patch_embedding = true;
  plans.push_back(only_embed);

  for (const FreezePlan& plan : plans) {
    apply_freeze_plan(model, plan);
    for (const auto& [name, var] : model.params()) {
      const bool frozen = oracle_frozen(name, plan, layers);
      CHECK_MESSAGE(var.requires_grad() == !frozen, "param ", name);
    }
    const std::vector<std::string> trainable = trainable_params(model);
    size_t expected = 0;
    for (const auto& [name, var] : model.params()) {
      if (!oracle_frozen(name, plan, layers)) ++expected;
    }
    CHECK(trainable.size() == expected);
  }
}

TEST_CASE("standard freeze plan covers embeddings and layers 0..k") {
  const FreezePlan plan = FreezePlan::standard(7);
  CHECK(plan.freeze_patch_embedding);
  CHECK(plan.freeze_positional_embedding);
  CHECK(plan.frozen_encoder_layers.size() == 8);
  CHECK(plan.frozen_encoder_layers.count(0) == 1);
  CHECK(plan.frozen_encoder_layers.count(7) == 1);
  CHECK(plan.frozen_encoder_layers.count(8) == 0);
  CHECK(plan.train_classifier_head);

  const FreezePlan round = FreezePlan::from_json(plan.to_json());
  CHECK(round.to_json() == plan.to_json());
}

TEST_CASE("freeze plan naming a missing layer is rejected") {
  VitModel model = VitModel::random_init(toy_config(), 7);
  FreezePlan plan;
  plan.frozen_encoder_layers = {5};
  CHECK_THROWS_AS(apply_freeze_plan(model, plan), Error);
}

TEST_CASE("checkpoint round trip restores weights, meta, and freeze state") {
  testutil::TempDir tmp("pf-ckpt");
  VitModel model = VitModel::random_init(toy_config(), 11);
  CheckpointMeta meta;
  meta.backbone_id = "toy-vit";
  meta.freeze_plan = FreezePlan::standard(0);
  meta.seed = 42;
  meta.normalization = Normalization::imagenet();
  meta.metrics = {{"f1", 0.93}};
  apply_freeze_plan(model, meta.freeze_plan);

  const auto path = tmp.path() / "model.pfck";
  save_checkpoint(model, meta, path);
  CHECK_FALSE(std::filesystem::exists(tmp.path() / "model.pfck.tmp"));

  const LoadedCheckpoint loaded = load_checkpoint(path);
  CHECK(loaded.model.weights_hash() == model.weights_hash());
  CHECK(loaded.meta.backbone_id == "toy-vit");
  CHECK(loaded.meta.seed == 42);
  CHECK(loaded.meta.freeze_plan.to_json() == meta.freeze_plan.to_json());
  CHECK(loaded.meta.normalization.mean == meta.normalization.mean);
  CHECK(loaded.meta.metrics["f1"] == doctest::Approx(0.93));
  for (const auto& [name, var] : loaded.model.params()) {
    const bool frozen = oracle_frozen(name, meta.freeze_plan, loaded.model.config().num_layers);
    CHECK(var.requires_grad() == !frozen);
  }
}

TEST_CASE("checkpoint refuses corruption, truncation, and bad magic") {
  testutil::TempDir tmp("pf-ckpt-bad");
  VitModel model = VitModel::random_init(toy_config(), 13);
  CheckpointMeta meta;
  meta.backbone_id = "toy-vit";
  const auto path = tmp.path() / "model.pfck";
  save_checkpoint(model, meta, path);

  CHECK_THROWS_AS(load_checkpoint(tmp.path() / "missing.pfck"), UserError);

  // Flip one payload byte: the hash check must fire.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-9, std::ios::end);
    char b = 0;
    f.read(&b, 1);
    f.seekp(-9, std::ios::end);
    b = static_cast<char>(b ^ 0x40);
    f.write(&b, 1);
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);

  // Rewrite cleanly, then truncate.
  save_checkpoint(model, meta, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 128);
  CHECK_THROWS_AS(load_checkpoint(path), Error);

  // Bad magic.
  save_checkpoint(model, meta, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXXXXXX", 8);
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);

  // Too short to even hold the header.
  {
    std::ofstream f(tmp.path() / "tiny.pfck", std::ios::binary);
    f << "PF";
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.path() / "tiny.pfck"), Error);
}

TEST_CASE("head reinitialization depends only on the seed") {
  VitModel a = VitModel::random_init(toy_config(), 3);
  VitModel b = VitModel::random_init(toy_config(), 4);
  a.reinit_head(77);
  b.reinit_head(77);
  const Tensor& wa = a.param("head.weight").value();
  const Tensor& wb = b.param("head.weight").value();
  for (size_t i = 0; i < wa.storage().size(); ++i) {
    CHECK(wa.storage()[i] == wb.storage()[i]);
  }
  a.reinit_head(78);
  bool all_same = true;
  for (size_t i = 0; i < wa.storage().size(); ++i) {
    all_same &= (a.param("head.weight").value().storage()[i] == wb.storage()[i]);
  }
  CHECK_FALSE(all_same);
}
