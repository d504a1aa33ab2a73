// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/eval.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "patchforge/errors.hpp"
#include "patchforge/hash.hpp"
#include "patchforge/image_io.hpp"
#include "patchforge/placement.hpp"
#include "patchforge/rng.hpp"
#include "patchforge/trainer.hpp"

namespace patchforge {
namespace {

uint64_t tensor_hash(const Tensor& t) {
  return fnv1a64(t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
}

void check_eval_config(const EvalConfig& cfg) {
  if (cfg.area_min <= 0.0 || cfg.area_max > 1.0 || cfg.area_min > cfg.area_max) {
    throw UserError("eval area fraction range must satisfy 0 < area_min <= area_max <= 1");
  }
  if (cfg.draws < 1) throw UserError("draws must be at least 1");
  if (cfg.batch_size < 1) throw UserError("batch_size must be at least 1");
}

void check_patch(const PatchState& patch) {
  const Shape& s = patch.pixels.shape();
  if (s.size() != 3 || s[0] != 3 || s[1] != s[2] || s[1] < 2) {
    throw Error(fmt::format("incompatible patch raster: expected (3,side,side), got {}", shape_str(s)));
  }
}

/// Mean person probability per image under cfg.draws random placements.
/// Image i's placements come from child stream i of cfg.seed, so the
/// result does not depend on batch boundaries.
std::vector<double> patched_person_probs(const ClassifierModel& model, const PatchState& patch,
                                         const LabeledImages& split, const EvalConfig& cfg) {
  NoGradGuard guard;
  Rng master(cfg.seed);
  const size_t n = split.images.size();
  std::vector<double> sums(n, 0.0);
  Var patch_var(patch.pixels.clone());

  std::vector<Tensor> buffer;
  std::vector<size_t> owners;
  auto flush = [&] {
    if (buffer.empty()) return;
    const Shape& s = buffer.front().shape();
    Tensor batch({static_cast<int64_t>(buffer.size()), s[0], s[1], s[2]});
    const int64_t per = s[0] * s[1] * s[2];
    for (size_t k = 0; k < buffer.size(); ++k) {
      std::memcpy(batch.data() + static_cast<int64_t>(k) * per, buffer[k].data(),
                  static_cast<size_t>(per) * sizeof(double));
    }
    Var probs = model.forward_person_prob(Var(std::move(batch)));
    const double* p = probs.value().data();
    for (size_t k = 0; k < buffer.size(); ++k) sums[owners[k]] += p[k];
    buffer.clear();
    owners.clear();
  };

  for (size_t i = 0; i < n; ++i) {
    Rng image_rng = master.child(i);
    for (int64_t d = 0; d < cfg.draws; ++d) {
      Rng draw_rng = image_rng.child(static_cast<uint64_t>(d));
      auto [composite, placement] = place_patch_resized(Var(split.images[i].clone()), patch_var, draw_rng,
                                                        cfg.area_min, cfg.area_max);
      buffer.push_back(composite.value().clone());
      owners.push_back(i);
      if (buffer.size() == static_cast<size_t>(cfg.batch_size)) flush();
    }
  }
  flush();

  for (double& s : sums) s /= static_cast<double>(cfg.draws);
  return sums;
}

}  // namespace

double compute_asr(const std::vector<int>& labels, const std::vector<int>& predictions) {
  if (labels.size() != predictions.size()) {
    throw Error(fmt::format("{} labels vs {} predictions", labels.size(), predictions.size()));
  }
  int64_t person = 0;
  int64_t missed = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    ++person;
    if (predictions[i] != 1) ++missed;
  }
  if (person == 0) throw Error("ASR is undefined without person-class images");
  return static_cast<double>(missed) / static_cast<double>(person);
}

nlohmann::ordered_json EvaluationReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["model_id"] = model_id;
  doc["patch_source_id"] = patch_source_id;
  doc["clean_accuracy"] = clean_accuracy;
  doc["patched_accuracy"] = patched_accuracy;
  doc["asr"] = asr;
  doc["n_person"] = n_person;
  doc["n_total"] = n_total;
  doc["craft_steps"] = craft_steps;
  return doc;
}

EvaluationReport EvaluationReport::from_json(const nlohmann::json& doc) {
  EvaluationReport r;
  r.model_id = doc.at("model_id").get<std::string>();
  r.patch_source_id = doc.at("patch_source_id").get<std::string>();
  r.clean_accuracy = doc.at("clean_accuracy").get<double>();
  r.patched_accuracy = doc.at("patched_accuracy").get<double>();
  r.asr = doc.at("asr").get<double>();
  r.n_person = doc.at("n_person").get<int64_t>();
  r.n_total = doc.at("n_total").get<int64_t>();
  r.craft_steps = doc.at("craft_steps").get<int64_t>();
  return r;
}

EvaluationReport evaluate_under_attack(const ClassifierModel& model, const PatchState& patch,
                                       const PatchMeta& patch_meta, const LabeledImages& test_split,
                                       const EvalConfig& cfg) {
  if (test_split.images.empty()) throw UserError("evaluation split is empty");
  if (test_split.images.size() != test_split.labels.size()) {
    throw Error("evaluation split has mismatched image/label counts");
  }
  check_eval_config(cfg);
  check_patch(patch);

  const uint64_t weights_before = model.model().weights_hash();
  const uint64_t patch_before = tensor_hash(patch.pixels);

  const std::vector<int> clean_preds = predict(model, test_split, cfg.batch_size);
  const std::vector<double> probs = patched_person_probs(model, patch, test_split, cfg);

  std::vector<int> patched_preds(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) patched_preds[i] = probs[i] > 0.5 ? 1 : 0;

  EvaluationReport report;
  report.model_id = model.backbone_id();
  report.patch_source_id = patch_meta.source_model_id;
  report.craft_steps = patch_meta.steps;
  report.n_total = static_cast<int64_t>(test_split.labels.size());
  int64_t clean_correct = 0;
  int64_t patched_correct = 0;
  for (size_t i = 0; i < test_split.labels.size(); ++i) {
    if (test_split.labels[i] == 1) ++report.n_person;
    if (clean_preds[i] == test_split.labels[i]) ++clean_correct;
    if (patched_preds[i] == test_split.labels[i]) ++patched_correct;
  }
  report.clean_accuracy = static_cast<double>(clean_correct) / static_cast<double>(report.n_total);
  report.patched_accuracy = static_cast<double>(patched_correct) / static_cast<double>(report.n_total);
  report.asr = compute_asr(test_split.labels, patched_preds);

  if (model.model().weights_hash() != weights_before) throw Error("evaluation mutated the model weights");
  if (tensor_hash(patch.pixels) != patch_before) throw Error("evaluation mutated the patch");
  return report;
}

const TransferCell& TransferMatrix::cell(size_t source_row, size_t target_col) const {
  if (source_row >= sources.size() || target_col >= targets.size()) {
    throw Error(fmt::format("cell ({},{}) outside {}x{} matrix", source_row, target_col, sources.size(),
                            targets.size()));
  }
  return cells[source_row * targets.size() + target_col];
}

nlohmann::ordered_json TransferMatrix::to_json() const {
  nlohmann::ordered_json doc;
  doc["sources"] = sources;
  doc["targets"] = targets;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const TransferCell& c : cells) {
    nlohmann::ordered_json cell;
    cell["patch_source"] = c.patch_source;
    cell["target_model"] = c.target_model;
    cell["ok"] = c.ok;
    if (c.ok) {
      cell["report"] = c.report.to_json();
    } else {
      cell["error"] = c.error;
    }
    arr.push_back(std::move(cell));
  }
  doc["cells"] = std::move(arr);
  return doc;
}

TransferMatrix TransferMatrix::from_json(const nlohmann::json& doc) {
  TransferMatrix m;
  m.sources = doc.at("sources").get<std::vector<std::string>>();
  m.targets = doc.at("targets").get<std::vector<std::string>>();
  for (const auto& cell : doc.at("cells")) {
    TransferCell c;
    c.patch_source = cell.at("patch_source").get<std::string>();
    c.target_model = cell.at("target_model").get<std::string>();
    c.ok = cell.at("ok").get<bool>();
    if (c.ok) {
      c.report = EvaluationReport::from_json(cell.at("report"));
    } else {
      c.error = cell.at("error").get<std::string>();
    }
    m.cells.push_back(std::move(c));
  }
  return m;
}

TransferMatrix transfer_matrix(const std::vector<const ClassifierModel*>& models,
                               const std::vector<std::pair<PatchState, PatchMeta>>& patches,
                               const LabeledImages& test_split, const EvalConfig& cfg) {
  if (models.empty()) throw UserError("transfer matrix needs at least one model");
  if (patches.empty()) throw UserError("transfer matrix needs at least one patch");

  TransferMatrix matrix;
  for (const auto& [state, meta] : patches) {
    matrix.sources.push_back(meta.source_model_id.empty() ? fmt::format("patch-{}", matrix.sources.size())
                                                          : meta.source_model_id);
  }
  for (const ClassifierModel* m : models) matrix.targets.push_back(m->backbone_id());

  for (size_t row = 0; row < patches.size(); ++row) {
    for (size_t col = 0; col < models.size(); ++col) {
      TransferCell cell;
      cell.patch_source = matrix.sources[row];
      cell.target_model = matrix.targets[col];
      try {
        cell.report = evaluate_under_attack(*models[col], patches[row].first, patches[row].second, test_split, cfg);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
      matrix.cells.push_back(std::move(cell));
    }
  }
  return matrix;
}

std::string render_report_table(const std::vector<EvaluationReport>& reports) {
  if (reports.empty()) throw UserError("no reports to render");
  const std::vector<std::string> headers = {"Model", "Accuracy", "Accuracy with Patch", "ASR", "Steps"};
  std::vector<std::vector<std::string>> rows;
  for (const EvaluationReport& r : reports) {
    rows.push_back({r.model_id, fmt::format("{:.2f}%", r.clean_accuracy * 100.0),
                    fmt::format("{:.2f}%", r.patched_accuracy * 100.0), fmt::format("{:.2f}%", r.asr * 100.0),
                    fmt::format("{}", r.craft_steps)});
  }

  std::vector<size_t> widths(headers.size());
  for (size_t c = 0; c < headers.size(); ++c) {
    widths[c] = headers[c].size();
    for (const auto& row : rows) widths[c] = std::max(widths[c], row[c].size());
  }
  auto emit_row = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (size_t c = 0; c < cells.size(); ++c) {
      line += fmt::format("{:<{}}", cells[c], widths[c]);
      if (c + 1 < cells.size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    return line + "\n";
  };

  std::string out = emit_row(headers);
  std::string rule;
  for (size_t c = 0; c < widths.size(); ++c) {
    rule += std::string(widths[c], '-');
    if (c + 1 < widths.size()) rule += "  ";
  }
  out += rule + "\n";
  for (const auto& row : rows) out += emit_row(row);
  return out;
}

nlohmann::ordered_json reports_to_json(const std::vector<EvaluationReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const EvaluationReport& r : reports) arr.push_back(r.to_json());
  return arr;
}

std::vector<EvaluationReport> reports_from_json(const nlohmann::json& doc) {
  std::vector<EvaluationReport> out;
  for (const auto& row : doc) out.push_back(EvaluationReport::from_json(row));
  return out;
}

void write_exemplars(const ClassifierModel& model, const PatchState& patch, const LabeledImages& split,
                     const EvalConfig& cfg, int64_t count, const std::filesystem::path& dir) {
  if (split.images.empty()) throw UserError("no images to render exemplars from");
  check_eval_config(cfg);
  check_patch(patch);
  std::filesystem::create_directories(dir);

  NoGradGuard guard;
  Rng master(cfg.seed);
  Var patch_var(patch.pixels.clone());
  const size_t n = std::min<size_t>(static_cast<size_t>(count), split.images.size());
  for (size_t i = 0; i < n; ++i) {
    Var clean(split.images[i].clone());
    // Draw 0 of image i: identical to the placement evaluate_under_attack uses.
    Rng draw_rng = master.child(i).child(0);
    auto [patched, placement] = place_patch_resized(clean, patch_var, draw_rng, cfg.area_min, cfg.area_max);

    const Shape& s = split.images[i].shape();
    Tensor pair_batch({2, s[0], s[1], s[2]});
    const int64_t per = s[0] * s[1] * s[2];
    std::memcpy(pair_batch.data(), clean.value().data(), static_cast<size_t>(per) * sizeof(double));
    std::memcpy(pair_batch.data() + per, patched.value().data(), static_cast<size_t>(per) * sizeof(double));
    const std::vector<double> probs = model.person_probs(pair_batch);

    save_png(dir / fmt::format("exemplar_{:02}_clean.png", i), clean.value());
    save_png(dir / fmt::format("exemplar_{:02}_patched.png", i), patched.value());
    std::ofstream txt(dir / fmt::format("exemplar_{:02}.txt", i), std::ios::trunc);
    txt << fmt::format("label={} clean_person_prob={:.2f}% patched_person_prob={:.2f}% placement=({},{}) side={}\n",
                       split.labels[i] == 1 ? "person" : "non-person", probs[0] * 100.0, probs[1] * 100.0,
                       placement.x, placement.y, placement.side);
  }
}

}  // namespace patchforge
