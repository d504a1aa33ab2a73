// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/normalization.hpp"

#include "patchforge/errors.hpp"

namespace patchforge {

Normalization Normalization::half() { return Normalization{}; }

Normalization Normalization::imagenet() {
  Normalization n;
  n.mean = {0.485, 0.456, 0.406};
  n.stddev = {0.229, 0.224, 0.225};
  return n;
}

Var Normalization::apply(const Var& x) const {
  Tensor m({3, 1, 1});
  Tensor inv({3, 1, 1});
  for (int64_t c = 0; c < 3; ++c) {
    if (stddev[c] <= 0.0) throw Error("normalization stddev must be positive");
    m.data()[c] = mean[c];
    inv.data()[c] = 1.0 / stddev[c];
  }
  return mul(sub(x, Var(std::move(m))), Var(std::move(inv)));
}

nlohmann::ordered_json Normalization::to_json() const {
  nlohmann::ordered_json doc;
  doc["mean"] = mean;
  doc["stddev"] = stddev;
  return doc;
}

Normalization Normalization::from_json(const nlohmann::json& doc) {
  Normalization n;
  n.mean = doc.at("mean").get<std::array<double, 3>>();
  n.stddev = doc.at("stddev").get<std::array<double, 3>>();
  return n;
}

}  // namespace patchforge
