// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/trainer.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include <fmt/format.h>

#include "patchforge/errors.hpp"
#include "patchforge/optim.hpp"
#include "patchforge/rng.hpp"

namespace patchforge {
namespace {

/// Copy the chosen images into one (B,3,S,S) batch tensor.
Tensor make_batch(const LabeledImages& set, const std::vector<size_t>& order, size_t begin, size_t end) {
  const Shape& s = set.images[order[begin]].shape();
  Tensor batch({static_cast<int64_t>(end - begin), s[0], s[1], s[2]});
  const int64_t per = s[0] * s[1] * s[2];
  for (size_t i = begin; i < end; ++i) {
    const Tensor& img = set.images[order[i]];
    if (img.shape() != s) {
      throw Error(fmt::format("image {} has shape {}, batch expects {}", order[i], shape_str(img.shape()),
                              shape_str(s)));
    }
    std::memcpy(batch.data() + (i - begin) * per, img.data(), static_cast<size_t>(per) * sizeof(double));
  }
  return batch;
}

void check_set(const LabeledImages& set, const char* which) {
  if (set.images.empty()) throw UserError(fmt::format("{} set is empty", which));
  if (set.images.size() != set.labels.size()) {
    throw Error(fmt::format("{} set has {} images but {} labels", which, set.images.size(), set.labels.size()));
  }
}

}  // namespace

std::vector<int> predict(const ClassifierModel& model, const LabeledImages& set, int64_t batch_size) {
  check_set(set, "prediction");
  NoGradGuard guard;
  std::vector<int> preds;
  preds.reserve(set.images.size());
  std::vector<size_t> order(set.images.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), begin + static_cast<size_t>(batch_size));
    Var probs = model.forward_person_prob(Var(make_batch(set, order, begin, end)));
    const double* p = probs.value().data();
    for (size_t i = 0; i < end - begin; ++i) preds.push_back(p[i] > 0.5 ? 1 : 0);
  }
  return preds;
}

MetricsReport evaluate_split(const ClassifierModel& model, const LabeledImages& set, int64_t batch_size) {
  return evaluate_metrics(set.labels, predict(model, set, batch_size));
}

TrainResult train(ClassifierModel& model, const LabeledImages& train_set, const LabeledImages& val_set,
                  const TrainConfig& cfg) {
  check_set(train_set, "training");
  check_set(val_set, "validation");
  if (cfg.batch_size < 1) throw UserError("batch_size must be at least 1");
  if (cfg.learning_rate < 0.0) throw UserError("learning_rate must be non-negative");
  if (cfg.epochs < 1) throw UserError("epochs must be at least 1");

  std::vector<Var> params;
  for (auto& [name, var] : model.model().params()) params.push_back(var);
  AdamConfig opt_cfg;
  opt_cfg.lr = cfg.learning_rate;
  Adam opt(params, opt_cfg);

  Rng master(cfg.seed);
  TrainResult result;
  std::vector<Tensor> best_weights;
  double best_f1 = -1.0;

  std::vector<size_t> order(train_set.images.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng epoch_rng = master.child(static_cast<uint64_t>(epoch - 1));
    Rng shuffle_rng = epoch_rng.child(0);
    Rng aug_rng = epoch_rng.child(1);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      Tensor batch = augment_batch(make_batch(train_set, order, begin, end), cfg.augmentation, aug_rng);
      std::vector<int64_t> labels;
      labels.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) labels.push_back(train_set.labels[order[i]]);

      Var loss = neg(mean(gather_rows(log_softmax_lastdim(model.forward_logits(Var(std::move(batch)))), labels)));
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw Error(fmt::format("training loss became non-finite ({}) at epoch {}, batch starting at {}", value,
                                epoch, begin));
      }
      loss_sum += value * static_cast<double>(end - begin);

      opt.zero_grad();
      backward(loss);
      opt.step();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.val = evaluate_split(model, val_set, cfg.batch_size);

    result.log_lines.push_back(fmt::format("epoch={} split=train metric=loss value={:.6f}", epoch, stats.train_loss));
    for (const auto& [metric, value] :
         {std::pair<const char*, double>{"accuracy", stats.val.accuracy},
          {"precision", stats.val.precision},
          {"recall", stats.val.recall},
          {"f1", stats.val.f1}}) {
      result.log_lines.push_back(fmt::format("epoch={} split=val metric={} value={:.6f}", epoch, metric, value));
    }

    if (stats.val.f1 > best_f1) {
      best_f1 = stats.val.f1;
      result.best_epoch = epoch;
      best_weights.clear();
      for (const auto& [name, var] : model.model().params()) best_weights.push_back(var.value().clone());
    }
    result.epochs.push_back(std::move(stats));
  }

  auto& params_out = model.model().params();
  for (size_t i = 0; i < params_out.size(); ++i) params_out[i].second.value() = best_weights[i];
  result.best_val_f1 = best_f1;
  return result;
}

}  // namespace patchforge
