// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/placement.hpp"

#include <cmath>

#include <fmt/format.h>

#include "patchforge/errors.hpp"
#include "patchforge/warp.hpp"

namespace patchforge {

nlohmann::ordered_json Placement::to_json() const {
  return nlohmann::ordered_json{{"x", x},           {"y", y},           {"side", side},
                                {"image_w", image_w}, {"image_h", image_h}, {"area_fraction", area_fraction}};
}

Placement Placement::from_json(const nlohmann::json& doc) {
  Placement p;
  p.x = doc.at("x").get<int64_t>();
  p.y = doc.at("y").get<int64_t>();
  p.side = doc.at("side").get<int64_t>();
  p.image_w = doc.at("image_w").get<int64_t>();
  p.image_h = doc.at("image_h").get<int64_t>();
  p.area_fraction = doc.at("area_fraction").get<double>();
  return p;
}

int64_t side_for_area_fraction(double fraction, int64_t image_w, int64_t image_h) {
  if (fraction <= 0.0) throw Error("area fraction must be positive");
  return static_cast<int64_t>(std::floor(std::sqrt(fraction * static_cast<double>(image_w * image_h))));
}

namespace {

Placement make_placement(int64_t x, int64_t y, int64_t side, int64_t w, int64_t h) {
  Placement p;
  p.x = x;
  p.y = y;
  p.side = side;
  p.image_w = w;
  p.image_h = h;
  p.area_fraction = static_cast<double>(side * side) / static_cast<double>(w * h);
  return p;
}

void check_fits(int64_t side, int64_t w, int64_t h) {
  if (side < 1) throw Error("patch side collapsed to zero pixels");
  if (side > w || side > h) {
    throw Error(fmt::format("patch side {} does not fit into a {}x{} image", side, w, h));
  }
}

}  // namespace

std::pair<Var, Placement> place_patch(const Var& image, const Var& patch, Rng& rng) {
  const Shape& si = image.shape();
  const Shape& sp = patch.shape();
  if (si.size() != 3 || sp.size() != 3) throw Error("place_patch: expected (C,H,W) image and patch");
  const int64_t h = si[1];
  const int64_t w = si[2];
  const int64_t side = sp[1];
  if (sp[2] != side) throw Error("place_patch: patch must be square");
  check_fits(side, w, h);
  const int64_t x = static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(w - side + 1)));
  const int64_t y = static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(h - side + 1)));
  return {paste(image, patch, x, y), make_placement(x, y, side, w, h)};
}

std::pair<Var, Placement> place_patch_resized(const Var& image, const Var& patch, Rng& rng, double frac_min,
                                              double frac_max) {
  if (frac_min > frac_max || frac_min <= 0.0 || frac_max > 1.0) {
    throw Error(fmt::format("invalid area-fraction range [{}, {}]", frac_min, frac_max));
  }
  const Shape& si = image.shape();
  if (si.size() != 3) throw Error("place_patch_resized: expected (C,H,W) image");
  const int64_t h = si[1];
  const int64_t w = si[2];
  const double frac = rng.uniform(frac_min, frac_max);
  const int64_t side = side_for_area_fraction(frac, w, h);
  check_fits(side, w, h);
  Var resized = resize_image(patch, side, side);
  const int64_t x = static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(w - side + 1)));
  const int64_t y = static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(h - side + 1)));
  return {paste(image, resized, x, y), make_placement(x, y, side, w, h)};
}

std::pair<Var, Placement> place_patch_at(const Var& image, const Var& patch, const Placement& placement) {
  const Shape& si = image.shape();
  if (si.size() != 3) throw Error("place_patch_at: expected (C,H,W) image");
  check_fits(placement.side, si[2], si[1]);
  Var resized = resize_image(patch, placement.side, placement.side);
  return {paste(image, resized, placement.x, placement.y),
          make_placement(placement.x, placement.y, placement.side, si[2], si[1])};
}

}  // namespace patchforge
