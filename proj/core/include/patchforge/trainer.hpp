// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "patchforge/adapter.hpp"
#include "patchforge/augment.hpp"
#include "patchforge/data.hpp"
#include "patchforge/metrics.hpp"

namespace patchforge {

struct TrainConfig {
  int64_t batch_size = 128;
  double learning_rate = 1e-4;
  int64_t epochs = 5;
  uint64_t seed = 2;
  AugConfig augmentation;
};

struct EpochStats {
  int64_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  MetricsReport val;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  int64_t best_epoch = 0;  // epoch whose weights the model ends up with
  double best_val_f1 = 0.0;
  std::vector<std::string> log_lines;  // "epoch=1 split=val metric=f1 value=0.78"
};

/// Fine-tune the trainable parameters (apply a freeze plan first) with
/// two-class cross-entropy and per-epoch validation. The model is left
/// holding the weights of the best-validation-F1 epoch. Seeded shuffling
/// and augmentation make same-seed runs bit-identical. Throws on an empty
/// set or a non-finite loss.
TrainResult train(ClassifierModel& model, const LabeledImages& train_set, const LabeledImages& val_set,
                  const TrainConfig& cfg);

/// Argmax predictions (person prob > 0.5 on the 2-logit head), batched,
/// no autodiff graph.
std::vector<int> predict(const ClassifierModel& model, const LabeledImages& set, int64_t batch_size = 128);

/// predict() + confusion metrics against the set's labels.
MetricsReport evaluate_split(const ClassifierModel& model, const LabeledImages& set, int64_t batch_size = 128);

}  // namespace patchforge
