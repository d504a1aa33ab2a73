// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/eot.hpp"

#include <cmath>

#include <fmt/format.h>

#include "patchforge/errors.hpp"

namespace patchforge {

nlohmann::ordered_json EotParams::to_json() const {
  return nlohmann::ordered_json{{"rotation_deg", rotation_deg},
                                {"scale", scale},
                                {"shear_x", shear_x},
                                {"shear_y", shear_y},
                                {"brightness_delta", brightness_delta},
                                {"contrast_factor", contrast_factor},
                                {"noise_sigma", noise_sigma}};
}

EotParams EotParams::from_json(const nlohmann::json& doc) {
  EotParams p;
  p.rotation_deg = doc.at("rotation_deg").get<double>();
  p.scale = doc.at("scale").get<double>();
  p.shear_x = doc.at("shear_x").get<double>();
  p.shear_y = doc.at("shear_y").get<double>();
  p.brightness_delta = doc.at("brightness_delta").get<double>();
  p.contrast_factor = doc.at("contrast_factor").get<double>();
  p.noise_sigma = doc.at("noise_sigma").get<double>();
  return p;
}

EotParams sample_eot(Rng& rng, const EotConfig& cfg) {
  EotParams p;
  p.rotation_deg = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
  p.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  p.shear_x = rng.uniform(-cfg.shear, cfg.shear);
  p.shear_y = rng.uniform(-cfg.shear, cfg.shear);
  p.brightness_delta = rng.uniform(-cfg.brightness, cfg.brightness);
  p.contrast_factor = rng.uniform(cfg.contrast_min, cfg.contrast_max);
  p.noise_sigma = cfg.noise_sigma;
  return p;
}

EotResult apply_eot(const Var& patch, const EotParams& params, Rng& noise_rng, int64_t max_side) {
  const Shape& s = patch.shape();
  if (s.size() != 3) throw Error(fmt::format("apply_eot: expected (C,H,W) patch, got {}", shape_str(s)));
  const int64_t side_in = s[1];
  if (s[2] != side_in) throw Error("apply_eot: patch must be square");

  EotResult result;
  int64_t side_out = std::max<int64_t>(1, std::llround(static_cast<double>(side_in) * params.scale));
  if (max_side > 0 && side_out > max_side) {
    side_out = max_side;
    result.scale_clamped = true;
  }
  result.side = side_out;

  // Inverse mapping: src = Sc^-1 * Sh^-1 * R^-1 * (out - c_out) + c_in.
  const double theta = params.rotation_deg * M_PI / 180.0;
  const double c = std::cos(theta);
  const double sn = std::sin(theta);
  const double det = 1.0 - params.shear_x * params.shear_y;
  if (std::abs(det) < 1e-9) throw Error("apply_eot: shear pair is not invertible");
  const double s_eff = static_cast<double>(side_out) / static_cast<double>(side_in);
  // Sh^-1 * R^-1, then the uniform 1/s_eff factor.
  const double m00 = (c - params.shear_x * (-sn)) / det / s_eff;
  const double m01 = (sn - params.shear_x * c) / det / s_eff;
  const double m10 = (-params.shear_y * c - sn) / det / s_eff;
  const double m11 = (-params.shear_y * sn + c) / det / s_eff;

  const double co = (static_cast<double>(side_out) - 1.0) * 0.5;
  const double ci = (static_cast<double>(side_in) - 1.0) * 0.5;

  Tensor coords({2, side_out, side_out});
  double* cx = coords.data();
  double* cy = coords.data() + side_out * side_out;
  for (int64_t y = 0; y < side_out; ++y) {
    const double dy = static_cast<double>(y) - co;
    for (int64_t x = 0; x < side_out; ++x) {
      const double dx = static_cast<double>(x) - co;
      cx[y * side_out + x] = m00 * dx + m01 * dy + ci;
      cy[y * side_out + x] = m10 * dx + m11 * dy + ci;
    }
  }

  Var geo = bilinear_gather(patch, coords);

  // Photometrics: contrast pivots at mid-gray, then brightness and noise.
  Var out = add_scalar(scale(add_scalar(geo, -0.5), params.contrast_factor), 0.5 + params.brightness_delta);
  if (params.noise_sigma > 0.0) {
    Tensor noise({s[0], side_out, side_out});
    for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = noise_rng.normal(0.0, params.noise_sigma);
    out = add(out, Var(std::move(noise)));
  }
  result.patch = clamp01(out);
  return result;
}

}  // namespace patchforge
