// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/warp.hpp"

#include <stdexcept>

namespace patchforge {

Tensor resize_coords(int64_t src_h, int64_t src_w, int64_t out_h, int64_t out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_coords: output size must be positive");
  Tensor coords({2, out_h, out_w});
  const double sx = static_cast<double>(src_w) / static_cast<double>(out_w);
  const double sy = static_cast<double>(src_h) / static_cast<double>(out_h);
  double* cx = coords.data();
  double* cy = coords.data() + out_h * out_w;
  for (int64_t y = 0; y < out_h; ++y) {
    const double srcy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    for (int64_t x = 0; x < out_w; ++x) {
      cx[y * out_w + x] = (static_cast<double>(x) + 0.5) * sx - 0.5;
      cy[y * out_w + x] = srcy;
    }
  }
  return coords;
}

Var resize_image(const Var& image, int64_t out_h, int64_t out_w) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw std::invalid_argument("resize_image: expected (C,H,W)");
  if (s[1] == out_h && s[2] == out_w) return image;
  return bilinear_gather(image, resize_coords(s[1], s[2], out_h, out_w));
}

}  // namespace patchforge
