// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "patchforge/autodiff.hpp"

namespace patchforge {

struct LossWeights {
  double beta = 4.0;
  double gamma = 0.5;
};

/// Direction of the classification term. `prose` minimizes the mean person
/// probability (the stated attack goal); `paper` keeps the literal printed
/// form, -mean, for side-by-side comparison.
enum class LossSign { prose, paper };

struct LossBreakdown {
  double l_class = 0.0;
  double l_sim = 0.0;
  double l_tv = 0.0;
  double l_total = 0.0;
  double beta = 4.0;
  double gamma = 0.5;
};

/// Mean person-class probability of the batch (sign per LossSign).
Var classification_loss(const Var& person_probs, LossSign sign = LossSign::prose);

/// Negative squared cosine similarity between the flattened patch and its
/// reference; in [-1, 0]. Zero-norm inputs have no defined cosine.
Var similarity_loss(const Var& patch, const Tensor& reference);

/// Isotropic total variation: every cell contributes
/// sqrt(dy^2 + dx^2 + eps), with the dy/dx terms dropped on the last
/// row/column respectively. Summed over channels.
Var tv_loss(const Var& patch, double eps = 1e-8);

/// Composite objective; also returns the scalar parts for logging.
Var total_loss(const Var& l_class, const Var& l_sim, const Var& l_tv, const LossWeights& weights,
               LossBreakdown* breakdown = nullptr);

}  // namespace patchforge
