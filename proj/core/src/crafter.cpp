// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/crafter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "patchforge/errors.hpp"
#include "patchforge/hash.hpp"
#include "patchforge/optim.hpp"
#include "patchforge/rng.hpp"

namespace patchforge {

nlohmann::ordered_json CraftConfig::to_json() const {
  nlohmann::ordered_json doc;
  doc["steps"] = steps;
  doc["learning_rate"] = learning_rate;
  doc["batch_size"] = batch_size;
  doc["seed"] = seed;
  doc["area_clamp"] = area_clamp;
  doc["patch_side"] = patch_side;
  doc["beta"] = weights.beta;
  doc["gamma"] = weights.gamma;
  doc["sign"] = sign == LossSign::prose ? "prose" : "paper";
  doc["eot"] = {{"rotation_deg", eot.rotation_deg}, {"scale_min", eot.scale_min},
                {"scale_max", eot.scale_max},       {"shear", eot.shear},
                {"brightness", eot.brightness},     {"contrast_min", eot.contrast_min},
                {"contrast_max", eot.contrast_max}, {"noise_sigma", eot.noise_sigma}};
  doc["crease"] = {{"angle_window_deg", crease.angle_window_deg},
                   {"strength", crease.strength},
                   {"max_offset_frac", crease.max_offset_frac}};
  return doc;
}

uint64_t CraftConfig::hash() const {
  const std::string dump = to_json().dump();
  return fnv1a64(dump.data(), dump.size());
}

nlohmann::ordered_json CraftItemTrace::to_json() const {
  nlohmann::ordered_json doc;
  doc["stream_seed"] = stream_seed;
  doc["image_index"] = image_index;
  doc["eot"] = eot.to_json();
  doc["crease"] = crease.to_json();
  doc["placement"] = placement.to_json();
  doc["scale_clamped"] = scale_clamped;
  return doc;
}

CraftItemTrace CraftItemTrace::from_json(const nlohmann::json& doc) {
  CraftItemTrace it;
  it.stream_seed = doc.at("stream_seed").get<uint64_t>();
  it.image_index = doc.at("image_index").get<int64_t>();
  it.eot = EotParams::from_json(doc.at("eot"));
  it.crease = CreaseSpec::from_json(doc.at("crease"));
  it.placement = Placement::from_json(doc.at("placement"));
  it.scale_clamped = doc.at("scale_clamped").get<bool>();
  return it;
}

nlohmann::ordered_json TraceRow::to_json() const {
  nlohmann::ordered_json doc;
  doc["step"] = step;
  doc["loss"] = {{"l_class", loss.l_class}, {"l_sim", loss.l_sim},   {"l_tv", loss.l_tv},
                 {"l_total", loss.l_total}, {"beta", loss.beta},     {"gamma", loss.gamma}};
  doc["mean_person_prob"] = mean_person_prob;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const CraftItemTrace& it : items) arr.push_back(it.to_json());
  doc["items"] = std::move(arr);
  return doc;
}

TraceRow TraceRow::from_json(const nlohmann::json& doc) {
  TraceRow row;
  row.step = doc.at("step").get<int64_t>();
  const auto& l = doc.at("loss");
  row.loss.l_class = l.at("l_class").get<double>();
  row.loss.l_sim = l.at("l_sim").get<double>();
  row.loss.l_tv = l.at("l_tv").get<double>();
  row.loss.l_total = l.at("l_total").get<double>();
  row.loss.beta = l.at("beta").get<double>();
  row.loss.gamma = l.at("gamma").get<double>();
  row.mean_person_prob = doc.at("mean_person_prob").get<double>();
  for (const auto& item : doc.at("items")) row.items.push_back(CraftItemTrace::from_json(item));
  return row;
}

void CraftTrace::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write trace '{}'", path.string()));
  for (const TraceRow& row : rows) out << row.to_json().dump() << '\n';
}

CraftTrace CraftTrace::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError(fmt::format("cannot open trace '{}'; craft-patch produces it", path.string()));
  CraftTrace trace;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      trace.rows.push_back(TraceRow::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(fmt::format("trace '{}' line {} is malformed: {}", path.string(), lineno, e.what()));
    }
  }
  return trace;
}

namespace {

/// Clears requires_grad on every model parameter for the lifetime of the
/// crafting run, so backward() never walks the weight subgraph.
class ParamFreezeGuard {
 public:
  explicit ParamFreezeGuard(VitModel& model) {
    for (auto& [name, var] : model.params()) {
      saved_.emplace_back(var, var.requires_grad());
      var.set_requires_grad(false);
    }
  }
  ~ParamFreezeGuard() {
    for (auto& [var, rg] : saved_) var.set_requires_grad(rg);
  }
  ParamFreezeGuard(const ParamFreezeGuard&) = delete;
  ParamFreezeGuard& operator=(const ParamFreezeGuard&) = delete;

 private:
  std::vector<std::pair<Var, bool>> saved_;
};

}  // namespace

CraftResult craft(ClassifierModel& model, const LabeledImages& attack_subset, const CraftConfig& cfg,
                  std::optional<PatchState> init, const CraftTrace* replay,
                  const std::filesystem::path& live_trace_path) {
  if (attack_subset.images.size() != attack_subset.labels.size()) {
    throw Error("attack subset has mismatched image/label counts");
  }
  std::vector<const Tensor*> persons;
  for (size_t i = 0; i < attack_subset.images.size(); ++i) {
    if (attack_subset.labels[i] == 1) persons.push_back(&attack_subset.images[i]);
  }
  if (persons.empty()) throw UserError("attack subset contains no person-class crops");

  const int64_t input_size = model.model().config().image_size;
  for (const Tensor* img : persons) {
    const Shape& s = img->shape();
    if (s.size() != 3 || s[0] != 3 || s[1] != input_size || s[2] != input_size) {
      throw Error(fmt::format("attack crop has shape {}, model expects (3,{},{})", shape_str(s), input_size,
                              input_size));
    }
  }

  if (cfg.learning_rate < 0.0) throw UserError("craft learning_rate must be non-negative");
  if (cfg.batch_size < 1) throw UserError("craft batch_size must be at least 1");
  if (cfg.area_clamp <= 0.0 || cfg.area_clamp > 1.0) throw UserError("area_clamp must be in (0,1]");
  if (cfg.patch_side < 2) throw UserError("patch_side must be at least 2");

  int64_t steps = cfg.steps;
  if (replay) {
    steps = static_cast<int64_t>(replay->rows.size());
    if (steps == 0) throw UserError("replay trace is empty");
  } else if (steps == 0) {
    steps = backbone_info(model.backbone_id()).default_craft_steps;
  }
  if (steps < 1) throw UserError("steps must be at least 1");

  PatchState state = init ? std::move(*init) : init_patch(cfg.patch_side, cfg.seed);
  {
    const Shape& s = state.pixels.shape();
    if (s.size() != 3 || s[0] != 3 || s[1] != s[2]) {
      throw Error(fmt::format("patch state must be (3,side,side), got {}", shape_str(s)));
    }
    if (state.reference.shape() != s) throw Error("patch reference shape differs from pixels");
  }

  ParamFreezeGuard freeze_guard(model.model());
  const uint64_t weights_before = model.model().weights_hash();

  Var patch(state.pixels.clone(), true, "patch");
  const Tensor reference = state.reference.clone();

  AdamConfig opt_cfg;
  opt_cfg.lr = cfg.learning_rate;
  Adam opt({patch}, opt_cfg);

  Rng master(cfg.seed);
  Rng data_rng = master.child(0);
  std::vector<size_t> order(persons.size());
  std::iota(order.begin(), order.end(), size_t{0});
  data_rng.shuffle(order);
  size_t cursor = 0;
  const size_t batch = std::min<size_t>(static_cast<size_t>(cfg.batch_size), persons.size());

  const int64_t max_side = side_for_area_fraction(cfg.area_clamp, input_size, input_size);

  CraftTrace trace;
  std::ofstream live;
  if (!live_trace_path.empty()) {
    if (live_trace_path.has_parent_path()) std::filesystem::create_directories(live_trace_path.parent_path());
    live.open(live_trace_path, std::ios::binary | std::ios::trunc);
    if (!live) throw Error(fmt::format("cannot write trace '{}'", live_trace_path.string()));
  }

  for (int64_t step = 1; step <= steps; ++step) {
    if (cursor + batch > order.size()) {
      data_rng.shuffle(order);
      cursor = 0;
    }
    Rng step_rng = master.child(static_cast<uint64_t>(step));
    const TraceRow* recorded = replay ? &replay->rows[static_cast<size_t>(step - 1)] : nullptr;
    if (recorded && recorded->items.size() != batch) {
      throw Error(fmt::format("replay step {} has {} items, batch size is {}", step, recorded->items.size(),
                              batch));
    }

    TraceRow row;
    row.step = step;
    std::vector<Var> patched;
    patched.reserve(batch);
    for (size_t item = 0; item < batch; ++item) {
      CraftItemTrace it;
      const CraftItemTrace* rec = recorded ? &recorded->items[item] : nullptr;
      Rng item_rng = rec ? Rng(rec->stream_seed) : step_rng.child(item);
      it.stream_seed = item_rng.seed();
      Rng eot_rng = item_rng.child(0);
      Rng noise_rng = item_rng.child(1);
      Rng crease_rng = item_rng.child(2);
      Rng place_rng = item_rng.child(3);

      it.image_index = rec ? rec->image_index : static_cast<int64_t>(order[cursor + item]);
      if (it.image_index < 0 || it.image_index >= static_cast<int64_t>(persons.size())) {
        throw Error(fmt::format("replay step {} references image {} of {}", step, it.image_index, persons.size()));
      }

      it.eot = rec ? rec->eot : sample_eot(eot_rng, cfg.eot);
      EotResult eot_out = apply_eot(patch, it.eot, noise_rng, max_side);
      it.scale_clamped = eot_out.scale_clamped;

      it.crease = rec ? rec->crease : sample_crease(crease_rng, cfg.crease, eot_out.side);
      Var creased = warp_by_field(eot_out.patch, crease_field(it.crease, eot_out.side, eot_out.side));

      Var image(persons[static_cast<size_t>(it.image_index)]->clone());
      auto [composite, placement] =
          rec ? place_patch_at(image, creased, rec->placement) : place_patch(image, creased, place_rng);
      it.placement = placement;

      patched.push_back(std::move(composite));
      row.items.push_back(std::move(it));
    }
    cursor += batch;

    Var probs = model.forward_person_prob(stack0(patched));
    Var l_class = classification_loss(probs, cfg.sign);
    Var l_sim = similarity_loss(patch, reference);
    Var l_tv = tv_loss(patch);
    Var total = total_loss(l_class, l_sim, l_tv, cfg.weights, &row.loss);

    const double* p = probs.value().data();
    row.mean_person_prob =
        std::accumulate(p, p + probs.numel(), 0.0) / static_cast<double>(probs.numel());

    const bool finite = std::isfinite(row.loss.l_total);
    trace.rows.push_back(row);
    if (live) {
      live << row.to_json().dump() << '\n';
      live.flush();
    }
    if (!finite) {
      throw Error(fmt::format(
          "craft loss became non-finite at step {} (class={}, sim={}, tv={}); trace dumped{}", step,
          row.loss.l_class, row.loss.l_sim, row.loss.l_tv,
          live_trace_path.empty() ? std::string(" rows held in memory only")
                                  : fmt::format(" to '{}'", live_trace_path.string())));
    }

    opt.zero_grad();
    backward(total);
    opt.step();
    double* px = patch.value().data();
    for (int64_t i = 0; i < patch.numel(); ++i) px[i] = std::clamp(px[i], 0.0, 1.0);
    state.step += 1;
  }

  state.pixels = patch.value().clone();

  if (model.model().weights_hash() != weights_before) {
    throw Error("model weights changed during craft; the crafting path must never touch them");
  }
  return CraftResult{std::move(state), std::move(trace), steps};
}

}  // namespace patchforge
