// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Single entry point: build-dataset, finetune, craft-patch, evaluate,
// transfer-matrix, report. Every run creates runs/<timestamp>-<subcommand>/
// with the fully resolved config beside the artifacts. Exit codes: 0 ok,
// 1 user error, 2 internal error.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "patchforge/adapter.hpp"
#include "patchforge/checkpoint.hpp"
#include "patchforge/crafter.hpp"
#include "patchforge/data.hpp"
#include "patchforge/errors.hpp"
#include "patchforge/eval.hpp"
#include "patchforge/freeze.hpp"
#include "patchforge/hash.hpp"
#include "patchforge/image_io.hpp"
#include "patchforge/patch_state.hpp"
#include "patchforge/run_config.hpp"
#include "patchforge/run_dir.hpp"
#include "patchforge/trainer.hpp"

namespace pf = patchforge;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw pf::Error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

void write_resolved_config(const pf::RunConfig& cfg, const std::filesystem::path& run_dir) {
  write_text(run_dir / "config.ini", cfg.to_ini_text());
}

pf::DatasetManifest load_manifest(const std::filesystem::path& dataset_dir) {
  const std::filesystem::path path = dataset_dir / "manifest.json";
  if (!std::filesystem::exists(path)) {
    throw pf::UserError(fmt::format("manifest '{}' not found; build-dataset produces it", path.string()));
  }
  return pf::DatasetManifest::load(path);
}

pf::ClassifierModel load_model(const std::string& checkpoint, const std::string& backbone, uint64_t seed) {
  if (!checkpoint.empty()) {
    if (!std::filesystem::exists(checkpoint)) {
      throw pf::UserError(fmt::format("checkpoint '{}' not found; finetune produces it", checkpoint));
    }
    pf::LoadedCheckpoint loaded = pf::load_checkpoint(checkpoint);
    return pf::ClassifierModel(std::move(loaded.model), loaded.meta.backbone_id, loaded.meta.normalization);
  }
  return pf::load_backbone(backbone, seed);
}

struct CommonFlags {
  std::string config_path;
  std::string dataset_dir;
  std::string checkpoint;
  std::string backbone;

  // One --seed option per subcommand shares this storage; only the option
  // belonging to the parsed subcommand can have a nonzero count.
  std::vector<CLI::Option*> seed_opts;
  uint64_t seed = 2;

  void add_config(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "INI config file; flags override its values");
    seed_opts.push_back(cmd->add_option("--seed", seed, "global seed override"));
  }

  bool seed_given() const {
    for (const CLI::Option* opt : seed_opts) {
      if (opt->count() > 0) return true;
    }
    return false;
  }

  pf::RunConfig resolve() const {
    pf::RunConfig cfg = config_path.empty() ? pf::RunConfig{} : pf::RunConfig::load(config_path);
    if (seed_given()) {
      cfg.seed = seed;
      cfg.finetune.seed = seed;
      cfg.craft.seed = seed;
      cfg.eval.seed = seed;
    }
    if (!backbone.empty()) cfg.backbone = backbone;
    return cfg;
  }
};

int cmd_build_dataset(const CommonFlags& common, const std::string& annotations, const std::string& images,
                      const std::vector<int64_t>& sizes) {
  pf::RunConfig cfg = common.resolve();
  if (!annotations.empty()) cfg.data.annotations = annotations;
  if (!images.empty()) cfg.data.images = images;
  if (!sizes.empty()) {
    if (sizes.size() != 3) throw pf::UserError("--splits takes three values: train val test");
    cfg.data.train = sizes[0];
    cfg.data.val = sizes[1];
    cfg.data.test = sizes[2];
  }
  if (cfg.data.annotations.empty()) throw pf::UserError("no annotation file given (--annotations or [data])");
  if (cfg.data.images.empty()) throw pf::UserError("no image directory given (--images or [data])");

  pf::CocoData coco = pf::parse_coco_file(cfg.data.annotations);
  pf::ClassPartition partition = pf::filter_annotations(coco);
  pf::SplitSizes split_sizes{cfg.data.train, cfg.data.val, cfg.data.test};
  pf::DatasetManifest manifest =
      pf::build_splits(coco, partition, split_sizes, cfg.data.padding_fraction, cfg.seed);

  const std::filesystem::path run_dir = pf::create_run_dir("build-dataset");
  write_resolved_config(cfg, run_dir);
  const std::filesystem::path dataset_dir = run_dir / "dataset";
  pf::ExtractionSummary summary = pf::extract_crops(manifest, cfg.data.images, dataset_dir);
  manifest.save(dataset_dir / "manifest.json");

  std::string log;
  for (const std::string& line : coco.rejected) log += "rejected-annotation: " + line + "\n";
  for (const pf::ExtractionFailure& f : summary.failures) {
    log += fmt::format("extraction-failure: {}: {}\n", f.file, f.reason);
  }
  write_text(run_dir / "build.log", log);

  std::cout << fmt::format("dataset: {} crops written, {} extraction failures, {} rejected annotations\n",
                           summary.written, summary.failures.size(), coco.rejected.size());
  std::cout << "artifacts: " << dataset_dir.string() << "\n";
  return 0;
}

int cmd_finetune(const CommonFlags& common, int64_t epochs_flag, int64_t batch_flag, double lr_flag) {
  pf::RunConfig cfg = common.resolve();
  if (epochs_flag > 0) cfg.finetune.epochs = epochs_flag;
  if (batch_flag > 0) cfg.finetune.batch_size = batch_flag;
  if (lr_flag >= 0.0) cfg.finetune.learning_rate = lr_flag;
  if (common.dataset_dir.empty()) throw pf::UserError("--dataset is required (a build-dataset artifact)");

  pf::DatasetManifest manifest = load_manifest(common.dataset_dir);
  pf::ClassifierModel model = pf::load_backbone(cfg.backbone, cfg.finetune.seed);
  const pf::FreezePlan plan = cfg.freeze_plan(model.model().config().num_layers);
  pf::apply_freeze_plan(model.model(), plan);

  const int64_t input = model.model().config().image_size;
  pf::LabeledImages train_set =
      pf::load_crops(pf::split_crops(manifest, pf::SplitId::train), common.dataset_dir, input);
  pf::LabeledImages val_set = pf::load_crops(pf::split_crops(manifest, pf::SplitId::val), common.dataset_dir, input);

  pf::TrainResult result = pf::train(model, train_set, val_set, cfg.finetune);

  const std::filesystem::path run_dir = pf::create_run_dir("finetune");
  write_resolved_config(cfg, run_dir);

  pf::CheckpointMeta meta;
  meta.backbone_id = model.backbone_id();
  meta.freeze_plan = plan;
  meta.seed = cfg.finetune.seed;
  meta.normalization = model.normalization();
  meta.metrics = result.epochs.empty() ? nlohmann::ordered_json()
                                       : result.epochs[static_cast<size_t>(result.best_epoch - 1)].val.to_json();
  pf::save_checkpoint(model.model(), meta, run_dir / "checkpoint.pfck");

  std::string log;
  for (const std::string& line : result.log_lines) log += line + "\n";
  write_text(run_dir / "train.log", log);

  nlohmann::ordered_json stats;
  stats["best_epoch"] = result.best_epoch;
  stats["best_val_f1"] = result.best_val_f1;
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const pf::EpochStats& e : result.epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    row["val"] = e.val.to_json();
    epochs.push_back(std::move(row));
  }
  stats["epochs"] = std::move(epochs);

  const auto test_specs = pf::split_crops(manifest, pf::SplitId::test);
  if (!test_specs.empty()) {
    pf::LabeledImages test_set = pf::load_crops(test_specs, common.dataset_dir, input);
    stats["test"] = pf::evaluate_split(model, test_set, cfg.finetune.batch_size).to_json();
  }
  write_text(run_dir / "metrics.json", stats.dump(2) + "\n");

  std::cout << fmt::format("finetune: best epoch {} with val F1 {:.4f}\n", result.best_epoch, result.best_val_f1);
  std::cout << "artifacts: " << (run_dir / "checkpoint.pfck").string() << "\n";
  return 0;
}

int cmd_craft_patch(const CommonFlags& common, int64_t steps_flag, const std::string& reference) {
  pf::RunConfig cfg = common.resolve();
  if (steps_flag >= 0) cfg.craft.steps = steps_flag;
  if (common.dataset_dir.empty()) throw pf::UserError("--dataset is required (a build-dataset artifact)");
  if (common.checkpoint.empty() && common.backbone.empty()) {
    throw pf::UserError("--checkpoint (a finetune artifact) or --backbone is required");
  }

  pf::ClassifierModel model = load_model(common.checkpoint, cfg.backbone, cfg.craft.seed);
  pf::DatasetManifest manifest = load_manifest(common.dataset_dir);

  const pf::AttackSubsetSource source = cfg.attack_subset_source == "train"
                                            ? pf::AttackSubsetSource::train
                                            : pf::AttackSubsetSource::held_out;
  int64_t n = cfg.attack_subset;
  if (n == 0) {
    for (const pf::CropSpec& c : manifest.crops) {
      const bool from_train = c.split == pf::SplitId::train;
      if (source == pf::AttackSubsetSource::held_out ? !from_train : from_train) ++n;
    }
  }
  const auto subset_specs = pf::select_attack_subset(manifest, n, cfg.craft.seed, source);
  pf::LabeledImages subset =
      pf::load_crops(subset_specs, common.dataset_dir, model.model().config().image_size);

  std::optional<pf::PatchState> init;
  if (!reference.empty()) {
    init = pf::init_patch_from(pf::load_image(reference), cfg.craft.patch_side, cfg.craft.seed);
  }

  const std::filesystem::path run_dir = pf::create_run_dir("craft-patch");
  write_resolved_config(cfg, run_dir);

  pf::CraftResult result =
      pf::craft(model, subset, cfg.craft, std::move(init), nullptr, run_dir / "trace.log");

  pf::PatchMeta meta;
  meta.seed = cfg.craft.seed;
  meta.steps = result.steps_run;
  meta.config_hash = pf::hex64(cfg.craft.hash());
  meta.source_model_id = model.backbone_id();
  meta.design_area_fraction = pf::patch_design_area_fraction(cfg.craft.patch_side);
  pf::export_patch(result.patch, meta, run_dir);

  if (!result.trace.rows.empty()) {
    const pf::TraceRow& last = result.trace.rows.back();
    std::cout << fmt::format("craft: {} steps, final loss {:.6f}, mean person prob {:.4f}\n", result.steps_run,
                             last.loss.l_total, last.mean_person_prob);
  }
  std::cout << "artifacts: " << (run_dir / "patch.png").string() << "\n";
  return 0;
}

int cmd_evaluate(const CommonFlags& common, const std::string& patch_path, const std::string& split_name,
                 int64_t exemplars_flag) {
  pf::RunConfig cfg = common.resolve();
  if (exemplars_flag >= 0) cfg.exemplars = exemplars_flag;
  if (common.dataset_dir.empty()) throw pf::UserError("--dataset is required (a build-dataset artifact)");
  if (patch_path.empty()) throw pf::UserError("--patch is required (a craft-patch artifact)");
  if (common.checkpoint.empty() && common.backbone.empty()) {
    throw pf::UserError("--checkpoint (a finetune artifact) or --backbone is required");
  }

  pf::ClassifierModel model = load_model(common.checkpoint, cfg.backbone, cfg.seed);
  pf::ImportedPatch patch = pf::import_patch(patch_path);
  pf::DatasetManifest manifest = load_manifest(common.dataset_dir);

  pf::SplitId split = pf::SplitId::test;
  if (split_name == "val") {
    split = pf::SplitId::val;
  } else if (split_name == "train") {
    split = pf::SplitId::train;
  } else if (split_name != "test") {
    throw pf::UserError(fmt::format("unknown split '{}'; use train, val, or test", split_name));
  }
  pf::LabeledImages images =
      pf::load_crops(pf::split_crops(manifest, split), common.dataset_dir, model.model().config().image_size);

  pf::EvaluationReport report = pf::evaluate_under_attack(model, patch.state, patch.meta, images, cfg.eval);

  const std::filesystem::path run_dir = pf::create_run_dir("evaluate");
  write_resolved_config(cfg, run_dir);
  const std::string table = pf::render_report_table({report});
  write_text(run_dir / "report.txt", table);
  write_text(run_dir / "report.json", pf::reports_to_json({report}).dump(2) + "\n");
  if (cfg.exemplars > 0) {
    pf::write_exemplars(model, patch.state, images, cfg.eval, cfg.exemplars, run_dir / "exemplars");
  }

  std::cout << table;
  std::cout << "artifacts: " << (run_dir / "report.json").string() << "\n";
  return 0;
}

std::string render_matrix_text(const pf::TransferMatrix& matrix) {
  std::vector<size_t> widths(matrix.targets.size() + 1, 0);
  widths[0] = std::string("patch \\ model").size();
  for (const std::string& s : matrix.sources) widths[0] = std::max(widths[0], s.size());
  for (size_t c = 0; c < matrix.targets.size(); ++c) {
    widths[c + 1] = std::max(matrix.targets[c].size(), size_t{7});
  }
  std::string out = fmt::format("{:<{}}", "patch \\ model", widths[0]);
  for (size_t c = 0; c < matrix.targets.size(); ++c) {
    out += "  " + fmt::format("{:<{}}", matrix.targets[c], widths[c + 1]);
  }
  out += "\n";
  for (size_t r = 0; r < matrix.sources.size(); ++r) {
    out += fmt::format("{:<{}}", matrix.sources[r], widths[0]);
    for (size_t c = 0; c < matrix.targets.size(); ++c) {
      const pf::TransferCell& cell = matrix.cell(r, c);
      const std::string text = cell.ok ? fmt::format("{:.2f}%", cell.report.asr * 100.0) : "FAILED";
      out += "  " + fmt::format("{:<{}}", text, widths[c + 1]);
    }
    out += "\n";
  }
  return out;
}

int cmd_transfer_matrix(const CommonFlags& common, const std::vector<std::string>& checkpoints,
                        const std::vector<std::string>& patches) {
  pf::RunConfig cfg = common.resolve();
  if (common.dataset_dir.empty()) throw pf::UserError("--dataset is required (a build-dataset artifact)");
  if (checkpoints.empty()) throw pf::UserError("--checkpoints is required (finetune artifacts)");
  if (patches.empty()) throw pf::UserError("--patches is required (craft-patch artifacts)");

  pf::DatasetManifest manifest = load_manifest(common.dataset_dir);

  // Contain load failures to their row/column instead of aborting the run.
  struct LoadedModel {
    std::optional<pf::ClassifierModel> model;
    std::string name;
    std::string error;
  };
  std::vector<LoadedModel> models;
  for (const std::string& path : checkpoints) {
    LoadedModel lm;
    try {
      lm.model = load_model(path, "", cfg.seed);
      lm.name = lm.model->backbone_id();
    } catch (const std::exception& e) {
      lm.name = std::filesystem::path(path).filename().string();
      lm.error = e.what();
    }
    models.push_back(std::move(lm));
  }
  struct LoadedPatch {
    std::optional<pf::ImportedPatch> patch;
    std::string name;
    std::string error;
  };
  std::vector<LoadedPatch> loaded_patches;
  for (const std::string& path : patches) {
    LoadedPatch lp;
    try {
      lp.patch = pf::import_patch(path);
      lp.name = lp.patch->meta.source_model_id.empty()
                    ? std::filesystem::path(path).filename().string()
                    : lp.patch->meta.source_model_id;
    } catch (const std::exception& e) {
      lp.name = std::filesystem::path(path).filename().string();
      lp.error = e.what();
    }
    loaded_patches.push_back(std::move(lp));
  }

  std::map<int64_t, pf::LabeledImages> images_by_size;
  pf::TransferMatrix matrix;
  for (const LoadedPatch& lp : loaded_patches) matrix.sources.push_back(lp.name);
  for (const LoadedModel& lm : models) matrix.targets.push_back(lm.name);
  for (const LoadedPatch& lp : loaded_patches) {
    for (const LoadedModel& lm : models) {
      pf::TransferCell cell;
      cell.patch_source = lp.name;
      cell.target_model = lm.name;
      try {
        if (!lp.error.empty()) throw pf::Error(lp.error);
        if (!lm.error.empty()) throw pf::Error(lm.error);
        const int64_t size = lm.model->model().config().image_size;
        auto it = images_by_size.find(size);
        if (it == images_by_size.end()) {
          it = images_by_size
                   .emplace(size, pf::load_crops(pf::split_crops(manifest, pf::SplitId::test),
                                                 common.dataset_dir, size))
                   .first;
        }
        cell.report = pf::evaluate_under_attack(*lm.model, lp.patch->state, lp.patch->meta, it->second, cfg.eval);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
      matrix.cells.push_back(std::move(cell));
    }
  }

  const std::filesystem::path run_dir = pf::create_run_dir("transfer-matrix");
  write_resolved_config(cfg, run_dir);
  write_text(run_dir / "matrix.json", matrix.to_json().dump(2) + "\n");
  const std::string text = render_matrix_text(matrix);
  write_text(run_dir / "matrix.txt", text);

  std::cout << text;
  std::cout << "artifacts: " << (run_dir / "matrix.json").string() << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs) {
  if (inputs.empty()) {
    throw pf::UserError("no inputs; pass report.json (from evaluate) or matrix.json (from transfer-matrix) files");
  }
  std::string combined;
  std::vector<pf::EvaluationReport> reports;
  for (const std::string& path : inputs) {
    if (!std::filesystem::exists(path)) {
      throw pf::UserError(
          fmt::format("input '{}' not found; evaluate produces report.json, transfer-matrix produces matrix.json",
                      path));
    }
    std::ifstream in(path, std::ios::binary);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw pf::UserError(fmt::format("input '{}' is not valid JSON: {}", path, e.what()));
    }
    if (doc.is_array()) {
      for (const pf::EvaluationReport& r : pf::reports_from_json(doc)) reports.push_back(r);
    } else if (doc.contains("cells")) {
      combined += render_matrix_text(pf::TransferMatrix::from_json(doc)) + "\n";
    } else {
      throw pf::UserError(fmt::format("input '{}' is neither a report list nor a transfer matrix", path));
    }
  }
  if (!reports.empty()) combined = pf::render_report_table(reports) + "\n" + combined;

  const std::filesystem::path run_dir = pf::create_run_dir("report");
  write_text(run_dir / "report.txt", combined);
  std::cout << combined;
  std::cout << "artifacts: " << (run_dir / "report.txt").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial patch toolkit for binary person classifiers"};
  app.require_subcommand(1);

  CommonFlags common;
  std::string annotations;
  std::string images;
  std::vector<int64_t> splits;
  int64_t epochs_flag = 0;
  int64_t batch_flag = 0;
  double lr_flag = -1.0;
  int64_t steps_flag = -1;
  std::string reference;
  std::string patch_path;
  std::string split_name = "test";
  int64_t exemplars_flag = -1;
  std::vector<std::string> checkpoints;
  std::vector<std::string> patch_paths;
  std::vector<std::string> report_inputs;

  CLI::App* build = app.add_subcommand("build-dataset", "parse annotations, cut crops, write the manifest");
  common.add_config(build);
  build->add_option("--annotations", annotations, "COCO-style annotation JSON");
  build->add_option("--images", images, "source image directory");
  build->add_option("--splits", splits, "train val test image counts")->expected(3);

  CLI::App* finetune = app.add_subcommand("finetune", "train a classifier on the dataset");
  common.add_config(finetune);
  finetune->add_option("--dataset", common.dataset_dir, "build-dataset artifact directory");
  finetune->add_option("--backbone", common.backbone, "backbone id (see docs)");
  finetune->add_option("--epochs", epochs_flag, "epoch count override");
  finetune->add_option("--batch-size", batch_flag, "batch size override");
  finetune->add_option("--lr", lr_flag, "learning rate override");

  CLI::App* craft = app.add_subcommand("craft-patch", "optimize an adversarial patch against a model");
  common.add_config(craft);
  craft->add_option("--dataset", common.dataset_dir, "build-dataset artifact directory");
  craft->add_option("--checkpoint", common.checkpoint, "finetune checkpoint (.pfck)");
  craft->add_option("--backbone", common.backbone, "raw backbone id instead of a checkpoint");
  craft->add_option("--steps", steps_flag, "step count override (0 = backbone default)");
  craft->add_option("--reference", reference, "patch init image (default mid-gray)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "clean vs patched accuracy and ASR");
  common.add_config(evaluate);
  evaluate->add_option("--dataset", common.dataset_dir, "build-dataset artifact directory");
  evaluate->add_option("--checkpoint", common.checkpoint, "finetune checkpoint (.pfck)");
  evaluate->add_option("--backbone", common.backbone, "raw backbone id instead of a checkpoint");
  evaluate->add_option("--patch", patch_path, "craft-patch artifact (directory or patch.png)");
  evaluate->add_option("--split", split_name, "split to evaluate (train, val, test)");
  evaluate->add_option("--exemplars", exemplars_flag, "write N clean/patched exemplar pairs");

  CLI::App* transfer = app.add_subcommand("transfer-matrix", "cross-model patch effectiveness");
  common.add_config(transfer);
  transfer->add_option("--dataset", common.dataset_dir, "build-dataset artifact directory");
  transfer->add_option("--checkpoints", checkpoints, "finetune checkpoints, one per target model");
  transfer->add_option("--patches", patch_paths, "craft-patch artifacts, one per source");

  CLI::App* report = app.add_subcommand("report", "re-render evaluation outputs as tables");
  report->add_option("inputs", report_inputs, "report.json or matrix.json files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (build->parsed()) return cmd_build_dataset(common, annotations, images, splits);
    if (finetune->parsed()) return cmd_finetune(common, epochs_flag, batch_flag, lr_flag);
    if (craft->parsed()) return cmd_craft_patch(common, steps_flag, reference);
    if (evaluate->parsed()) return cmd_evaluate(common, patch_path, split_name, exemplars_flag);
    if (transfer->parsed()) return cmd_transfer_matrix(common, checkpoints, patch_paths);
    if (report->parsed()) return cmd_report(report_inputs);
    throw pf::Error("no subcommand dispatched");
  } catch (const pf::UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
