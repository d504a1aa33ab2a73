// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/optim.hpp"

#include <cmath>
#include <utility>

namespace patchforge {

Adam::Adam(std::vector<Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Var& p : params_) {
    if (!p.requires_grad() || !p.has_grad()) continue;
    Slot& slot = state_[p.id()];
    if (!slot.m.defined()) {
      slot.m = Tensor(p.shape());
      slot.v = Tensor(p.shape());
    }
    const double* g = p.grad().data();
    double* m = slot.m.data();
    double* v = slot.v.data();
    double* x = p.value().data();
    const int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      x[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Var& p : params_) p.zero_grad();
}

}  // namespace patchforge
