// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/augment.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "patchforge/errors.hpp"

namespace patchforge {

Tensor augment_batch(const Tensor& images, const AugConfig& cfg, Rng& rng) {
  const Shape& s = images.shape();
  if (s.size() != 4) throw Error(fmt::format("augment_batch expects (B,C,H,W), got {}", shape_str(s)));
  if (cfg.hflip_prob < 0.0 || cfg.hflip_prob > 1.0) throw UserError("hflip_prob must be in [0,1]");

  const int64_t b = s[0], c = s[1], h = s[2], w = s[3];
  Tensor out(s);
  for (int64_t i = 0; i < b; ++i) {
    const bool flip = rng.uniform01() < cfg.hflip_prob;
    const double delta = rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter);
    const double factor = rng.uniform(1.0 - cfg.contrast_jitter, 1.0 + cfg.contrast_jitter);
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t y = 0; y < h; ++y) {
        const double* src = images.data() + ((i * c + ch) * h + y) * w;
        double* dst = out.data() + ((i * c + ch) * h + y) * w;
        for (int64_t x = 0; x < w; ++x) {
          const double v = src[flip ? w - 1 - x : x] + delta;
          dst[x] = std::clamp((v - 0.5) * factor + 0.5, 0.0, 1.0);
        }
      }
    }
  }
  return out;
}

}  // namespace patchforge
