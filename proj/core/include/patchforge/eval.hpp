// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchforge/adapter.hpp"
#include "patchforge/data.hpp"
#include "patchforge/patch_state.hpp"

namespace patchforge {

struct EvalConfig {
  double area_min = 0.30;  // patch resize range, as a share of image area
  double area_max = 0.60;
  uint64_t seed = 2;
  int64_t batch_size = 32;
  int64_t draws = 1;  // placements per image; >1 averages person prob
};

/// Miss rate on the person class: of the images labeled person, the
/// fraction predicted non-person. Throws when no person labels exist.
double compute_asr(const std::vector<int>& labels, const std::vector<int>& predictions);

struct EvaluationReport {
  std::string model_id;
  std::string patch_source_id;  // backbone the patch was crafted against
  double clean_accuracy = 0.0;
  double patched_accuracy = 0.0;
  double asr = 0.0;
  int64_t n_person = 0;
  int64_t n_total = 0;
  int64_t craft_steps = 0;

  nlohmann::ordered_json to_json() const;
  static EvaluationReport from_json(const nlohmann::json& doc);
};

/// Clean accuracy on the full split, patched accuracy with one (or
/// cfg.draws) random placement per image, and ASR over the person subset.
/// Placements draw an area fraction in [area_min, area_max], then a
/// position, from a per-image child stream of cfg.seed, so reports are
/// reproducible and independent of batching. Neither the model nor the
/// patch is mutated (hash-checked).
EvaluationReport evaluate_under_attack(const ClassifierModel& model, const PatchState& patch,
                                       const PatchMeta& patch_meta, const LabeledImages& test_split,
                                       const EvalConfig& cfg);

struct TransferCell {
  std::string patch_source;
  std::string target_model;
  bool ok = false;
  std::string error;        // set when !ok
  EvaluationReport report;  // valid when ok
};

/// Rows = patch sources, columns = target models, cells = full reports.
struct TransferMatrix {
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  std::vector<TransferCell> cells;  // row-major, sources x targets

  const TransferCell& cell(size_t source_row, size_t target_col) const;

  nlohmann::ordered_json to_json() const;
  static TransferMatrix from_json(const nlohmann::json& doc);
};

/// Full cross product of evaluate_under_attack calls, every cell with the
/// same EvalConfig (seed included). A failing cell is recorded with its
/// error and the rest of the matrix still completes.
TransferMatrix transfer_matrix(const std::vector<const ClassifierModel*>& models,
                               const std::vector<std::pair<PatchState, PatchMeta>>& patches,
                               const LabeledImages& test_split, const EvalConfig& cfg);

/// Plain-text table: Model | Accuracy | Accuracy with Patch | ASR | Steps,
/// percentages with two decimals (e.g. 66.40%).
std::string render_report_table(const std::vector<EvaluationReport>& reports);

/// Same rows as structured JSON; round-trips to identical report values.
nlohmann::ordered_json reports_to_json(const std::vector<EvaluationReport>& reports);
std::vector<EvaluationReport> reports_from_json(const nlohmann::json& doc);

/// Write `count` clean/patched image pairs plus a text sidecar with the
/// person probability of each, Fig-3 style, into dir.
void write_exemplars(const ClassifierModel& model, const PatchState& patch, const LabeledImages& split,
                     const EvalConfig& cfg, int64_t count, const std::filesystem::path& dir);

}  // namespace patchforge
