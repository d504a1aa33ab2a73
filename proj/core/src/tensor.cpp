// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/tensor.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace patchforge {

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    out += fmt::format("{}{}", i ? "," : "", s[i]);
  }
  return out + ")";
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  const int64_t n = shape_numel(shape_);
  if (n < 0) throw std::invalid_argument("negative tensor dimension " + shape_str(shape_));
  data_.assign(static_cast<size_t>(n), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
    throw std::invalid_argument(fmt::format("tensor data size {} does not match shape {}", data_.size(), shape_str(shape_)));
  }
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

namespace {
int64_t flat_offset(const Shape& shape, std::initializer_list<int64_t> idx) {
  if (idx.size() != shape.size()) {
    throw std::invalid_argument(fmt::format("index rank {} vs tensor rank {}", idx.size(), shape.size()));
  }
  int64_t off = 0;
  size_t d = 0;
  for (int64_t i : idx) {
    if (i < 0 || i >= shape[d]) throw std::out_of_range("tensor index out of range");
    off = off * shape[d] + i;
    ++d;
  }
  return off;
}
}  // namespace

double& Tensor::at(std::initializer_list<int64_t> idx) {
  return data_[static_cast<size_t>(flat_offset(shape_, idx))];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  return data_[static_cast<size_t>(flat_offset(shape_, idx))];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw std::logic_error(fmt::format("item() on tensor with {} elements", data_.size()));
  }
  return data_[0];
}

void Tensor::fill(double v) {
  for (auto& x : data_) x = v;
}

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace patchforge
