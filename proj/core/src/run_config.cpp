// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/run_config.hpp"

#include <charconv>
#include <set>

#include <fmt/format.h>

#include "patchforge/errors.hpp"

namespace patchforge {
namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed",
      "backbone",
      "data.annotations",
      "data.images",
      "data.train",
      "data.val",
      "data.test",
      "data.padding_fraction",
      "finetune.batch_size",
      "finetune.learning_rate",
      "finetune.epochs",
      "finetune.seed",
      "finetune.hflip_prob",
      "finetune.brightness_jitter",
      "finetune.contrast_jitter",
      "finetune.freeze",
      "craft.steps",
      "craft.learning_rate",
      "craft.batch_size",
      "craft.seed",
      "craft.area_clamp",
      "craft.patch_side",
      "craft.beta",
      "craft.gamma",
      "craft.sign",
      "craft.attack_subset",
      "craft.attack_subset_source",
      "craft.eot_rotation_deg",
      "craft.eot_scale_min",
      "craft.eot_scale_max",
      "craft.eot_shear",
      "craft.eot_brightness",
      "craft.eot_contrast_min",
      "craft.eot_contrast_max",
      "craft.eot_noise_sigma",
      "craft.crease_angle_window_deg",
      "craft.crease_strength",
      "craft.crease_max_offset_frac",
      "eval.area_min",
      "eval.area_max",
      "eval.seed",
      "eval.batch_size",
      "eval.draws",
      "eval.exemplars",
  };
  return keys;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw UserError(fmt::format("config value {} {}", key, what));
}

}  // namespace

RunConfig RunConfig::from_ini(const IniFile& ini) {
  for (const IniFile::Entry& e : ini.entries()) {
    const std::string key = e.section.empty() ? e.key : e.section + "." + e.key;
    if (!known_keys().count(key)) {
      throw UserError(fmt::format("unknown config key '{}' (line {})", key, e.line));
    }
  }

  RunConfig cfg;
  cfg.seed = ini.get_uint("", "seed", cfg.seed);
  cfg.backbone = ini.get_string("", "backbone", cfg.backbone);

  cfg.data.annotations = ini.get_string("data", "annotations", cfg.data.annotations);
  cfg.data.images = ini.get_string("data", "images", cfg.data.images);
  cfg.data.train = ini.get_int("data", "train", cfg.data.train);
  cfg.data.val = ini.get_int("data", "val", cfg.data.val);
  cfg.data.test = ini.get_int("data", "test", cfg.data.test);
  cfg.data.padding_fraction = ini.get_double("data", "padding_fraction", cfg.data.padding_fraction);
  require(cfg.data.padding_fraction >= 0.0 && cfg.data.padding_fraction < 1.0, "data.padding_fraction",
          "must be in [0,1)");
  require(cfg.data.train >= 0 && cfg.data.val >= 0 && cfg.data.test >= 0, "data.train/val/test",
          "must be non-negative");

  cfg.finetune.batch_size = ini.get_int("finetune", "batch_size", cfg.finetune.batch_size);
  cfg.finetune.learning_rate = ini.get_double("finetune", "learning_rate", cfg.finetune.learning_rate);
  cfg.finetune.epochs = ini.get_int("finetune", "epochs", cfg.finetune.epochs);
  cfg.finetune.seed = ini.get_uint("finetune", "seed", cfg.seed);
  cfg.finetune.augmentation.hflip_prob =
      ini.get_double("finetune", "hflip_prob", cfg.finetune.augmentation.hflip_prob);
  cfg.finetune.augmentation.brightness_jitter =
      ini.get_double("finetune", "brightness_jitter", cfg.finetune.augmentation.brightness_jitter);
  cfg.finetune.augmentation.contrast_jitter =
      ini.get_double("finetune", "contrast_jitter", cfg.finetune.augmentation.contrast_jitter);
  cfg.freeze = ini.get_string("finetune", "freeze", cfg.freeze);
  require(cfg.finetune.batch_size >= 1, "finetune.batch_size", "must be at least 1");
  require(cfg.finetune.learning_rate >= 0.0, "finetune.learning_rate", "must be non-negative");
  require(cfg.finetune.epochs >= 1, "finetune.epochs", "must be at least 1");
  require(cfg.finetune.augmentation.hflip_prob >= 0.0 && cfg.finetune.augmentation.hflip_prob <= 1.0,
          "finetune.hflip_prob", "must be in [0,1]");
  require(cfg.finetune.augmentation.brightness_jitter >= 0.0, "finetune.brightness_jitter",
          "must be non-negative");
  require(cfg.finetune.augmentation.contrast_jitter >= 0.0 && cfg.finetune.augmentation.contrast_jitter < 1.0,
          "finetune.contrast_jitter", "must be in [0,1)");

  cfg.craft.steps = ini.get_int("craft", "steps", cfg.craft.steps);
  cfg.craft.learning_rate = ini.get_double("craft", "learning_rate", cfg.craft.learning_rate);
  cfg.craft.batch_size = ini.get_int("craft", "batch_size", cfg.craft.batch_size);
  cfg.craft.seed = ini.get_uint("craft", "seed", cfg.seed);
  cfg.craft.area_clamp = ini.get_double("craft", "area_clamp", cfg.craft.area_clamp);
  cfg.craft.patch_side = ini.get_int("craft", "patch_side", cfg.craft.patch_side);
  cfg.craft.weights.beta = ini.get_double("craft", "beta", cfg.craft.weights.beta);
  cfg.craft.weights.gamma = ini.get_double("craft", "gamma", cfg.craft.weights.gamma);
  const std::string sign = ini.get_string("craft", "sign", "prose");
  if (sign == "prose") {
    cfg.craft.sign = LossSign::prose;
  } else if (sign == "paper") {
    cfg.craft.sign = LossSign::paper;
  } else {
    throw UserError(fmt::format("config value craft.sign must be 'prose' or 'paper', got '{}'", sign));
  }
  cfg.attack_subset = ini.get_int("craft", "attack_subset", cfg.attack_subset);
  cfg.attack_subset_source = ini.get_string("craft", "attack_subset_source", cfg.attack_subset_source);
  require(cfg.attack_subset >= 0, "craft.attack_subset", "must be non-negative");
  require(cfg.attack_subset_source == "held_out" || cfg.attack_subset_source == "train",
          "craft.attack_subset_source", "must be 'held_out' or 'train'");

  cfg.craft.eot.rotation_deg = ini.get_double("craft", "eot_rotation_deg", cfg.craft.eot.rotation_deg);
  cfg.craft.eot.scale_min = ini.get_double("craft", "eot_scale_min", cfg.craft.eot.scale_min);
  cfg.craft.eot.scale_max = ini.get_double("craft", "eot_scale_max", cfg.craft.eot.scale_max);
  cfg.craft.eot.shear = ini.get_double("craft", "eot_shear", cfg.craft.eot.shear);
  cfg.craft.eot.brightness = ini.get_double("craft", "eot_brightness", cfg.craft.eot.brightness);
  cfg.craft.eot.contrast_min = ini.get_double("craft", "eot_contrast_min", cfg.craft.eot.contrast_min);
  cfg.craft.eot.contrast_max = ini.get_double("craft", "eot_contrast_max", cfg.craft.eot.contrast_max);
  cfg.craft.eot.noise_sigma = ini.get_double("craft", "eot_noise_sigma", cfg.craft.eot.noise_sigma);
  cfg.craft.crease.angle_window_deg =
      ini.get_double("craft", "crease_angle_window_deg", cfg.craft.crease.angle_window_deg);
  cfg.craft.crease.strength = ini.get_double("craft", "crease_strength", cfg.craft.crease.strength);
  cfg.craft.crease.max_offset_frac =
      ini.get_double("craft", "crease_max_offset_frac", cfg.craft.crease.max_offset_frac);

  require(cfg.craft.steps >= 0, "craft.steps", "must be non-negative (0 = backbone default)");
  require(cfg.craft.learning_rate >= 0.0, "craft.learning_rate", "must be non-negative");
  require(cfg.craft.batch_size >= 1, "craft.batch_size", "must be at least 1");
  require(cfg.craft.area_clamp > 0.0 && cfg.craft.area_clamp <= 1.0, "craft.area_clamp", "must be in (0,1]");
  require(cfg.craft.patch_side >= 2, "craft.patch_side", "must be at least 2");
  require(cfg.craft.weights.beta >= 0.0, "craft.beta", "must be non-negative");
  require(cfg.craft.weights.gamma >= 0.0, "craft.gamma", "must be non-negative");
  require(cfg.craft.eot.rotation_deg >= 0.0, "craft.eot_rotation_deg", "must be non-negative");
  require(cfg.craft.eot.scale_min > 0.0 && cfg.craft.eot.scale_min <= cfg.craft.eot.scale_max,
          "craft.eot_scale_min", "must satisfy 0 < scale_min <= scale_max");
  require(cfg.craft.eot.shear >= 0.0, "craft.eot_shear", "must be non-negative");
  require(cfg.craft.eot.brightness >= 0.0, "craft.eot_brightness", "must be non-negative");
  require(cfg.craft.eot.contrast_min > 0.0 && cfg.craft.eot.contrast_min <= cfg.craft.eot.contrast_max,
          "craft.eot_contrast_min", "must satisfy 0 < contrast_min <= contrast_max");
  require(cfg.craft.eot.noise_sigma >= 0.0, "craft.eot_noise_sigma", "must be non-negative");
  require(cfg.craft.crease.angle_window_deg >= 0.0, "craft.crease_angle_window_deg", "must be non-negative");
  require(cfg.craft.crease.strength >= 0.0, "craft.crease_strength", "must be non-negative");
  require(cfg.craft.crease.max_offset_frac >= 0.0, "craft.crease_max_offset_frac", "must be non-negative");

  cfg.eval.area_min = ini.get_double("eval", "area_min", cfg.eval.area_min);
  cfg.eval.area_max = ini.get_double("eval", "area_max", cfg.eval.area_max);
  cfg.eval.seed = ini.get_uint("eval", "seed", cfg.seed);
  cfg.eval.batch_size = ini.get_int("eval", "batch_size", cfg.eval.batch_size);
  cfg.eval.draws = ini.get_int("eval", "draws", cfg.eval.draws);
  cfg.exemplars = ini.get_int("eval", "exemplars", cfg.exemplars);
  require(cfg.eval.area_min > 0.0 && cfg.eval.area_min <= cfg.eval.area_max && cfg.eval.area_max <= 1.0,
          "eval.area_min", "must satisfy 0 < area_min <= area_max <= 1");
  require(cfg.eval.batch_size >= 1, "eval.batch_size", "must be at least 1");
  require(cfg.eval.draws >= 1, "eval.draws", "must be at least 1");
  require(cfg.exemplars >= 0, "eval.exemplars", "must be non-negative");

  // The freeze policy is validated here, resolved against a depth later.
  cfg.freeze_plan(12);
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return from_ini(IniFile::load(path)); }

FreezePlan RunConfig::freeze_plan(int64_t num_layers) const {
  if (freeze == "none") return FreezePlan{};
  if (freeze == "paper") return FreezePlan::standard(7);
  if (freeze == "auto") {
    // Paper plan on full-depth encoders; small study backbones train fully.
    return num_layers >= 12 ? FreezePlan::standard(num_layers - 5) : FreezePlan{};
  }
  int64_t through = 0;
  const auto [ptr, ec] = std::from_chars(freeze.data(), freeze.data() + freeze.size(), through);
  if (ec != std::errc{} || ptr != freeze.data() + freeze.size()) {
    throw UserError(fmt::format(
        "config value finetune.freeze must be 'auto', 'paper', 'none', or a last-frozen-layer index, got '{}'",
        freeze));
  }
  if (through < 0) return FreezePlan{};
  return FreezePlan::standard(through);
}

std::string RunConfig::to_ini_text() const {
  std::string out;
  out += fmt::format("seed = {}\n", seed);
  out += fmt::format("backbone = {}\n", backbone);
  out += "\n[data]\n";
  out += fmt::format("annotations = {}\n", data.annotations);
  out += fmt::format("images = {}\n", data.images);
  out += fmt::format("train = {}\n", data.train);
  out += fmt::format("val = {}\n", data.val);
  out += fmt::format("test = {}\n", data.test);
  out += fmt::format("padding_fraction = {}\n", data.padding_fraction);
  out += "\n[finetune]\n";
  out += fmt::format("batch_size = {}\n", finetune.batch_size);
  out += fmt::format("learning_rate = {}\n", finetune.learning_rate);
  out += fmt::format("epochs = {}\n", finetune.epochs);
  out += fmt::format("seed = {}\n", finetune.seed);
  out += fmt::format("hflip_prob = {}\n", finetune.augmentation.hflip_prob);
  out += fmt::format("brightness_jitter = {}\n", finetune.augmentation.brightness_jitter);
  out += fmt::format("contrast_jitter = {}\n", finetune.augmentation.contrast_jitter);
  out += fmt::format("freeze = {}\n", freeze);
  out += "\n[craft]\n";
  out += fmt::format("steps = {}\n", craft.steps);
  out += fmt::format("learning_rate = {}\n", craft.learning_rate);
  out += fmt::format("batch_size = {}\n", craft.batch_size);
  out += fmt::format("seed = {}\n", craft.seed);
  out += fmt::format("area_clamp = {}\n", craft.area_clamp);
  out += fmt::format("patch_side = {}\n", craft.patch_side);
  out += fmt::format("beta = {}\n", craft.weights.beta);
  out += fmt::format("gamma = {}\n", craft.weights.gamma);
  out += fmt::format("sign = {}\n", craft.sign == LossSign::prose ? "prose" : "paper");
  out += fmt::format("attack_subset = {}\n", attack_subset);
  out += fmt::format("attack_subset_source = {}\n", attack_subset_source);
  out += fmt::format("eot_rotation_deg = {}\n", craft.eot.rotation_deg);
  out += fmt::format("eot_scale_min = {}\n", craft.eot.scale_min);
  out += fmt::format("eot_scale_max = {}\n", craft.eot.scale_max);
  out += fmt::format("eot_shear = {}\n", craft.eot.shear);
  out += fmt::format("eot_brightness = {}\n", craft.eot.brightness);
  out += fmt::format("eot_contrast_min = {}\n", craft.eot.contrast_min);
  out += fmt::format("eot_contrast_max = {}\n", craft.eot.contrast_max);
  out += fmt::format("eot_noise_sigma = {}\n", craft.eot.noise_sigma);
  out += fmt::format("crease_angle_window_deg = {}\n", craft.crease.angle_window_deg);
  out += fmt::format("crease_strength = {}\n", craft.crease.strength);
  out += fmt::format("crease_max_offset_frac = {}\n", craft.crease.max_offset_frac);
  out += "\n[eval]\n";
  out += fmt::format("area_min = {}\n", eval.area_min);
  out += fmt::format("area_max = {}\n", eval.area_max);
  out += fmt::format("seed = {}\n", eval.seed);
  out += fmt::format("batch_size = {}\n", eval.batch_size);
  out += fmt::format("draws = {}\n", eval.draws);
  out += fmt::format("exemplars = {}\n", exemplars);
  return out;
}

}  // namespace patchforge
