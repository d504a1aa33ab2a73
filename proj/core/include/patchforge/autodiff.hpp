// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "patchforge/tensor.hpp"

namespace patchforge {

namespace detail {
struct Node;
}

/// Handle to a node in a dynamically built reverse-mode graph. Copies are
/// shallow (they alias the same node). Leaves created with requires_grad
/// participate in backward(); everything derived from them records its own
/// backward closure.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false, std::string name = {});

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  Tensor& value();  // mutable access for optimizers; only sensible on leaves
  const Tensor& grad() const;
  bool has_grad() const;
  bool requires_grad() const;
  void set_requires_grad(bool rg);
  const std::string& name() const;
  void set_name(std::string name);
  void zero_grad();

  const Shape& shape() const { return value().shape(); }
  int64_t numel() const { return value().numel(); }

  /// Stable identity for optimizer state maps and graph bookkeeping.
  const void* id() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Var(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Run reverse-mode accumulation from a scalar root. Each call re-walks the
/// graph; leaf grads accumulate until zero_grad().
void backward(const Var& root);

bool grad_enabled();

/// RAII guard disabling graph recording (inference paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---- elementwise / broadcast ----
// add/sub/mul broadcast right-aligned (dims equal or 1), numpy-style.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double c);
Var scale(const Var& a, double c);
Var neg(const Var& a);

Var sqrt(const Var& a);    // defined for positive values
Var square(const Var& a);
Var log(const Var& a);
Var reciprocal(const Var& a);  // 1/x, x != 0
Var gelu(const Var& a);    // exact (erf) form
/// Clamp to [0,1]; gradient passes only strictly inside the interval.
Var clamp01(const Var& a);

// ---- structure ----
Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, const std::vector<size_t>& perm);
Var narrow(const Var& a, size_t dim, int64_t start, int64_t len);
Var concat(const Var& a, const Var& b, size_t dim);
Var stack0(std::span<const Var> items);  // (s...) x N -> (N, s...)

// ---- reductions ----
Var sum(const Var& a);
Var mean(const Var& a);

// ---- linear algebra ----
/// a: (..., M, K); b: (K, N) shared across batch, or (..., K, N) with equal
/// leading dims.
Var matmul(const Var& a, const Var& b);
Var transpose_last2(const Var& a);
/// x: (..., D) -> (..., E) with weight (D, E) and bias (E).
Var linear(const Var& x, const Var& weight, const Var& bias);

// ---- nn primitives ----
Var softmax_lastdim(const Var& a);
Var log_softmax_lastdim(const Var& a);
Var layer_norm(const Var& x, const Var& weight, const Var& bias, double eps);
/// rows: (R, K), one column index per row -> (R).
Var gather_rows(const Var& a, const std::vector<int64_t>& cols);

// ---- image ops ----
/// src: (C, H, W); coords: (2, Ho, Wo) with coords[0]=x, coords[1]=y in
/// source pixel units. Out-of-range coordinates sample edge-clamped pixels.
/// Coordinates are data (no gradient); gradient flows to src values.
Var bilinear_gather(const Var& src, const Tensor& coords);
/// Copy of image with patch written at integer offset (x0, y0); the covered
/// rectangle takes its gradient from patch, the rest from image.
Var paste(const Var& image, const Var& patch, int64_t x0, int64_t y0);
/// x: (B, C, H, W) with H, W divisible by p -> (B, T, C*p*p); tokens in
/// row-major grid order, vectors laid out [c][py][px] (matches a conv
/// projection flattening).
Var image_to_tokens(const Var& x, int64_t p);

}  // namespace patchforge
