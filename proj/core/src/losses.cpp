// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/losses.hpp"

#include <cmath>

#include <fmt/format.h>

#include "patchforge/errors.hpp"

namespace patchforge {

Var classification_loss(const Var& person_probs, LossSign sign) {
  if (!person_probs.defined() || person_probs.numel() == 0) {
    throw Error("classification_loss: empty probability batch");
  }
  Var m = mean(person_probs);
  return sign == LossSign::prose ? m : neg(m);
}

Var similarity_loss(const Var& patch, const Tensor& reference) {
  if (patch.shape() != reference.shape()) {
    throw Error(fmt::format("similarity_loss: patch {} vs reference {}", shape_str(patch.shape()),
                            shape_str(reference.shape())));
  }
  double ref_sq = 0.0;
  for (int64_t i = 0; i < reference.numel(); ++i) ref_sq += reference[i] * reference[i];
  if (ref_sq == 0.0) throw Error("similarity_loss: zero-norm reference has no defined cosine");
  double patch_sq = 0.0;
  for (int64_t i = 0; i < patch.numel(); ++i) patch_sq += patch.value()[i] * patch.value()[i];
  if (patch_sq == 0.0) throw Error("similarity_loss: zero-norm patch has no defined cosine");

  Var dot = sum(mul(patch, Var(reference.clone())));
  Var norm_sq = sum(square(patch));
  // cos^2 = dot^2 / (|P|^2 |N|^2); the reference norm is a constant.
  Var cos_sq = scale(mul(square(dot), reciprocal(norm_sq)), 1.0 / ref_sq);
  return neg(cos_sq);
}

Var tv_loss(const Var& patch, double eps) {
  const Shape& s = patch.shape();
  if (s.size() != 3) throw Error(fmt::format("tv_loss: expected (C,H,W) patch, got {}", shape_str(s)));
  const int64_t c = s[0];
  const int64_t h = s[1];
  const int64_t w = s[2];
  if (h < 2 || w < 2) throw Error("tv_loss: patch must be at least 2x2");

  Var dy = sub(narrow(patch, 1, 1, h - 1), narrow(patch, 1, 0, h - 1));  // (C, H-1, W)
  Var dx = sub(narrow(patch, 2, 1, w - 1), narrow(patch, 2, 0, w - 1));  // (C, H, W-1)
  // Pad the missing last row/column with zeros so every cell contributes a
  // sqrt(eps + ...) term, flat regions included.
  Var dy2 = concat(square(dy), Var(Tensor({c, 1, w})), 1);
  Var dx2 = concat(square(dx), Var(Tensor({c, h, 1})), 2);
  return sum(sqrt(add_scalar(add(dy2, dx2), eps)));
}

Var total_loss(const Var& l_class, const Var& l_sim, const Var& l_tv, const LossWeights& weights,
               LossBreakdown* breakdown) {
  const double lc = l_class.value().item();
  const double ls = l_sim.value().item();
  const double lt = l_tv.value().item();
  if (!std::isfinite(lc)) throw Error("total_loss: classification term is not finite");
  if (!std::isfinite(ls)) throw Error("total_loss: similarity term is not finite");
  if (!std::isfinite(lt)) throw Error("total_loss: total-variation term is not finite");

  Var total = add(add(l_class, scale(l_sim, weights.beta)), scale(l_tv, weights.gamma));
  if (breakdown) {
    breakdown->l_class = lc;
    breakdown->l_sim = ls;
    breakdown->l_tv = lt;
    breakdown->l_total = total.value().item();
    breakdown->beta = weights.beta;
    breakdown->gamma = weights.gamma;
  }
  return total;
}

}  // namespace patchforge
