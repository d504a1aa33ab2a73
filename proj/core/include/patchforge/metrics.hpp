// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

namespace patchforge {

/// Confusion counts with person (label 1) as the positive class.
struct Counts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }
};

Counts count_confusion(const std::vector<int>& labels, const std::vector<int>& predictions);

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when no positive predictions
  double recall = 0.0;     // 0 when no positive labels
  double f1 = 0.0;         // 2PR/(P+R), 0 when P+R = 0
  Counts counts;

  nlohmann::ordered_json to_json() const;
};

MetricsReport metrics_from_counts(const Counts& c);

/// Convenience: confusion counts + derived metrics in one call.
/// Throws on empty or mismatched-length inputs.
MetricsReport evaluate_metrics(const std::vector<int>& labels, const std::vector<int>& predictions);

}  // namespace patchforge
