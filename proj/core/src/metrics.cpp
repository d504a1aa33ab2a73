// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/metrics.hpp"

#include <fmt/format.h>

#include "patchforge/errors.hpp"

namespace patchforge {

Counts count_confusion(const std::vector<int>& labels, const std::vector<int>& predictions) {
  if (labels.empty()) throw Error("cannot compute metrics on an empty split");
  if (labels.size() != predictions.size()) {
    throw Error(fmt::format("{} labels vs {} predictions", labels.size(), predictions.size()));
  }
  Counts c;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      (predictions[i] == 1 ? c.tp : c.fn)++;
    } else {
      (predictions[i] == 1 ? c.fp : c.tn)++;
    }
  }
  return c;
}

MetricsReport metrics_from_counts(const Counts& c) {
  if (c.total() == 0) throw Error("cannot compute metrics on an empty split");
  MetricsReport r;
  r.counts = c;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

MetricsReport evaluate_metrics(const std::vector<int>& labels, const std::vector<int>& predictions) {
  return metrics_from_counts(count_confusion(labels, predictions));
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["accuracy"] = accuracy;
  doc["precision"] = precision;
  doc["recall"] = recall;
  doc["f1"] = f1;
  doc["tp"] = counts.tp;
  doc["fp"] = counts.fp;
  doc["fn"] = counts.fn;
  doc["tn"] = counts.tn;
  return doc;
}

}  // namespace patchforge
