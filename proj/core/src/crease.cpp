// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/crease.hpp"

#include <cmath>

#include <fmt/format.h>

#include "patchforge/errors.hpp"

namespace patchforge {

nlohmann::ordered_json CreaseSpec::to_json() const {
  return nlohmann::ordered_json{{"vantage_u", vantage_u},
                                {"vantage_v", vantage_v},
                                {"direction_deg", direction_deg},
                                {"strength", strength},
                                {"max_offset_px", max_offset_px}};
}

CreaseSpec CreaseSpec::from_json(const nlohmann::json& doc) {
  CreaseSpec s;
  s.vantage_u = doc.at("vantage_u").get<double>();
  s.vantage_v = doc.at("vantage_v").get<double>();
  s.direction_deg = doc.at("direction_deg").get<double>();
  s.strength = doc.at("strength").get<double>();
  s.max_offset_px = doc.at("max_offset_px").get<double>();
  return s;
}

CreaseSpec sample_crease(Rng& rng, const CreaseConfig& cfg, int64_t patch_side) {
  CreaseSpec s;
  s.vantage_u = rng.uniform01();
  s.vantage_v = rng.uniform01();
  const double base = rng.uniform(0.0, 360.0);
  const double half = cfg.angle_window_deg * 0.5;
  s.direction_deg = base + rng.uniform(-half, half);
  s.strength = cfg.strength;
  s.max_offset_px = cfg.max_offset_frac * static_cast<double>(patch_side);
  return s;
}

Tensor crease_field(const CreaseSpec& spec, int64_t h, int64_t w) {
  if (h < 2 || w < 2) throw Error("crease_field: patch must be at least 2x2");
  const double theta = spec.direction_deg * M_PI / 180.0;
  const double ux = std::cos(theta);
  const double uy = std::sin(theta);
  // Normal perpendicular to the crease direction; d > 0 selects one side.
  const double nx = -uy;
  const double ny = ux;
  const double vx = spec.vantage_u * static_cast<double>(w - 1);
  const double vy = spec.vantage_v * static_cast<double>(h - 1);

  Tensor field({2, h, w});
  double* fx = field.data();
  double* fy = field.data() + h * w;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const double d = (static_cast<double>(x) - vx) * nx + (static_cast<double>(y) - vy) * ny;
      if (d > 0.0) {
        const double mag = std::min(spec.strength * d * d, spec.max_offset_px);
        fx[y * w + x] = ux * mag;
        fy[y * w + x] = uy * mag;
      }
    }
  }
  return field;
}

Var warp_by_field(const Var& patch, const Tensor& field) {
  const Shape& s = patch.shape();
  const Shape& f = field.shape();
  if (s.size() != 3) throw Error(fmt::format("warp_by_field: expected (C,H,W) patch, got {}", shape_str(s)));
  if (f.size() != 3 || f[0] != 2 || f[1] != s[1] || f[2] != s[2]) {
    throw Error(fmt::format("warp_by_field: field {} does not match patch {}", shape_str(f), shape_str(s)));
  }
  const int64_t h = s[1];
  const int64_t w = s[2];
  Tensor coords({2, h, w});
  const double* dx = field.data();
  const double* dy = field.data() + h * w;
  double* cx = coords.data();
  double* cy = coords.data() + h * w;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const int64_t i = y * w + x;
      if (!std::isfinite(dx[i]) || !std::isfinite(dy[i])) {
        throw Error("warp_by_field: displacement field contains non-finite values");
      }
      cx[i] = static_cast<double>(x) + dx[i];
      cy[i] = static_cast<double>(y) + dy[i];
    }
  }
  return bilinear_gather(patch, coords);
}

}  // namespace patchforge
