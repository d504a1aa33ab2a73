// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "patchforge/crease.hpp"
#include "patchforge/eot.hpp"
#include "patchforge/placement.hpp"
#include "patchforge/rng.hpp"
#include "test_util.hpp"

using namespace patchforge;

namespace {

EotParams identity_params() {
  EotParams p;
  p.rotation_deg = 0.0;
  p.scale = 1.0;
  p.shear_x = 0.0;
  p.shear_y = 0.0;
  p.brightness_delta = 0.0;
  p.contrast_factor = 1.0;
  p.noise_sigma = 0.0;
  return p;
}

}  // namespace

TEST_CASE("sampled EOT parameters respect every configured range") {
  Rng rng(101);
  EotConfig cfg;
  for (int i = 0; i < 20000; ++i) {
    const EotParams p = sample_eot(rng, cfg);
    CHECK(p.rotation_deg >= -20.0);
    CHECK(p.rotation_deg <= 20.0);
    CHECK(p.scale >= 0.25);
    CHECK(p.scale <= 1.25);
    CHECK(p.shear_x >= -0.7);
    CHECK(p.shear_x <= 0.7);
    CHECK(p.shear_y >= -0.7);
    CHECK(p.shear_y <= 0.7);
    CHECK(p.brightness_delta >= -0.1);
    CHECK(p.brightness_delta <= 0.1);
    CHECK(p.contrast_factor >= 0.8);
    CHECK(p.contrast_factor <= 1.2);
    CHECK(p.noise_sigma == doctest::Approx(0.1));
  }
}

TEST_CASE("identity EOT with zero noise is a passthrough") {
  const Tensor patch = testutil::random_tensor({3, 16, 16}, 7, 0.1, 0.9);
  Rng noise(1);
  const EotResult out = apply_eot(Var(patch), identity_params(), noise);
  REQUIRE(out.side == 16);
  CHECK_FALSE(out.scale_clamped);
  for (size_t i = 0; i < patch.storage().size(); ++i) {
    CHECK(out.patch.value().storage()[i] == doctest::Approx(patch.storage()[i]).epsilon(1e-12));
  }
}

TEST_CASE("EOT photometrics apply contrast about mid-gray then brightness") {
  Tensor patch = Tensor::full({3, 8, 8}, 0.6);
  EotParams p = identity_params();
  p.brightness_delta = 0.05;
  p.contrast_factor = 1.2;
  Rng noise(1);
  const EotResult out = apply_eot(Var(patch), p, noise);
  const double expected = 1.2 * (0.6 - 0.5) + 0.5 + 0.05;
  for (double v : out.patch.value().storage()) {
    CHECK(v == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("EOT photometrics clip to [0,1]") {
  Tensor bright = Tensor::full({3, 4, 4}, 0.99);
  EotParams p = identity_params();
  p.brightness_delta = 0.1;
  Rng noise(1);
  const EotResult up = apply_eot(Var(bright), p, noise);
  for (double v : up.patch.value().storage()) {
    CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
  Tensor dark = Tensor::full({3, 4, 4}, 0.01);
  p.brightness_delta = -0.1;
  const EotResult down = apply_eot(Var(dark), p, noise);
  for (double v : down.patch.value().storage()) {
    CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("EOT scaling resizes by round(side*scale) and clamps at max_side") {
  const Tensor patch = testutil::random_tensor({3, 20, 20}, 9);
  EotParams p = identity_params();
  p.scale = 1.19;
  Rng noise(1);
  const EotResult grown = apply_eot(Var(patch), p, noise);
  CHECK(grown.side == 24);  // round(20 * 1.19) = 24
  CHECK_FALSE(grown.scale_clamped);

  const EotResult clamped = apply_eot(Var(patch), p, noise, 21);
  CHECK(clamped.side == 21);
  CHECK(clamped.scale_clamped);
  CHECK(clamped.patch.value().shape()[1] == 21);

  p.scale = 0.25;
  const EotResult shrunk = apply_eot(Var(patch), p, noise);
  CHECK(shrunk.side == 5);
  CHECK_FALSE(shrunk.scale_clamped);
}

TEST_CASE("EOT noise has the configured spread") {
  Tensor patch = Tensor::full({3, 40, 40}, 0.5);
  EotParams p = identity_params();
  p.noise_sigma = 0.1;
  Rng noise(33);
  const EotResult out = apply_eot(Var(patch), p, noise);
  double sum = 0.0;
  double sq = 0.0;
  const auto& vals = out.patch.value().storage();
  for (double v : vals) {
    const double d = v - 0.5;
    sum += d;
    sq += d * d;
  }
  const double n = static_cast<double>(vals.size());
  const double mean = sum / n;
  const double std = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("EOT rotation by 180 degrees reverses the raster") {
  const Tensor patch = testutil::random_tensor({1, 9, 9}, 13, 0.1, 0.9);
  EotParams p = identity_params();
  p.rotation_deg = 180.0;  // outside the sampling range but fine for the warp
  Rng noise(1);
  const EotResult out = apply_eot(Var(patch), p, noise);
  REQUIRE(out.side == 9);
  const auto& src = patch.storage();
  const auto& dst = out.patch.value().storage();
  for (int64_t r = 0; r < 9; ++r) {
    for (int64_t c = 0; c < 9; ++c) {
      CHECK(dst[static_cast<size_t>(r * 9 + c)] ==
            doctest::Approx(src[static_cast<size_t>((8 - r) * 9 + (8 - c))]).epsilon(1e-9));
    }
  }
}

TEST_CASE("EOT params survive a JSON round trip") {
  Rng rng(55);
  const EotParams p = sample_eot(rng);
  const EotParams q = EotParams::from_json(p.to_json());
  CHECK(q.rotation_deg == doctest::Approx(p.rotation_deg).epsilon(1e-15));
  CHECK(q.scale == doctest::Approx(p.scale).epsilon(1e-15));
  CHECK(q.shear_x == doctest::Approx(p.shear_x).epsilon(1e-15));
  CHECK(q.shear_y == doctest::Approx(p.shear_y).epsilon(1e-15));
  CHECK(q.brightness_delta == doctest::Approx(p.brightness_delta).epsilon(1e-15));
  CHECK(q.contrast_factor == doctest::Approx(p.contrast_factor).epsilon(1e-15));
  CHECK(q.noise_sigma == doctest::Approx(p.noise_sigma).epsilon(1e-15));
}

TEST_CASE("crease field is zero on the line and on the negative side") {
  CreaseSpec spec;
  spec.vantage_u = 0.5;
  spec.vantage_v = 0.5;
  spec.direction_deg = 0.0;  // crease along +x through the center
  spec.strength = 0.02;
  spec.max_offset_px = 1e9;  // effectively uncapped
  const int64_t side = 33;
  const Tensor field = crease_field(spec, side, side);
  const double cy = 0.5 * static_cast<double>(side - 1);
  for (int64_t r = 0; r < side; ++r) {
    for (int64_t c = 0; c < side; ++c) {
      const double dx = field.at({0, r, c});
      const double dy = field.at({1, r, c});
      const double mag = std::hypot(dx, dy);
      // For direction 0 the normal is +y, so rows past the vantage row move.
      const double signed_dist = static_cast<double>(r) - cy;
      if (std::abs(signed_dist) < 1e-9) {
        CHECK(mag < 1e-6);
      } else if (signed_dist < 0.0) {
        // One-sided: the non-selected half stays put.
        CHECK(mag < 1e-9);
      } else {
        CHECK(mag == doctest::Approx(spec.strength * signed_dist * signed_dist).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("crease displacement grows quadratically until the cap") {
  CreaseSpec spec;
  spec.vantage_u = 0.5;
  spec.vantage_v = 0.5;
  spec.direction_deg = 0.0;
  spec.strength = 0.02;
  const int64_t side = 41;
  spec.max_offset_px = 0.10 * static_cast<double>(side);
  const Tensor field = crease_field(spec, side, side);
  const int64_t mid_r = 20;
  const int64_t c = 20;
  // Rows below the vantage row are the displaced side for direction 0.
  for (int64_t d = 1; d <= 9; ++d) {
    const double m1 = std::hypot(field.at({0, mid_r + d, c}), field.at({1, mid_r + d, c}));
    const double m2 = std::hypot(field.at({0, mid_r + 2 * d, c}), field.at({1, mid_r + 2 * d, c}));
    const double expect1 = spec.strength * static_cast<double>(d * d);
    if (expect1 * 4.0 <= spec.max_offset_px) {
      CHECK(m1 == doctest::Approx(expect1).epsilon(1e-9));
      CHECK(m2 / m1 == doctest::Approx(4.0).epsilon(1e-6));
    }
  }
  // Far from the line the cap takes over.
  const double far = std::hypot(field.at({0, side - 1, c}), field.at({1, side - 1, c}));
  CHECK(far == doctest::Approx(spec.max_offset_px).epsilon(1e-9));
}

TEST_CASE("crease displacement points along the crease direction") {
  CreaseSpec spec;
  spec.vantage_u = 0.5;
  spec.vantage_v = 0.5;
  spec.direction_deg = 0.0;
  spec.strength = 0.01;
  spec.max_offset_px = 100.0;
  const Tensor field = crease_field(spec, 31, 31);
  for (int64_t r = 0; r < 31; ++r) {
    for (int64_t c = 0; c < 31; ++c) {
      // Direction 0 means displacement along x only.
      CHECK(std::abs(field.at({1, r, c})) < 1e-9);
    }
  }
}

TEST_CASE("sampled creases stay inside their configured ranges") {
  Rng rng(77);
  CreaseConfig cfg;
  const int64_t side = 50;
  for (int i = 0; i < 5000; ++i) {
    const CreaseSpec s = sample_crease(rng, cfg, side);
    CHECK(s.vantage_u >= 0.0);
    CHECK(s.vantage_u <= 1.0);
    CHECK(s.vantage_v >= 0.0);
    CHECK(s.vantage_v <= 1.0);
    CHECK(s.direction_deg >= -cfg.angle_window_deg / 2.0);
    CHECK(s.direction_deg < 360.0 + cfg.angle_window_deg / 2.0);
    CHECK(s.strength == doctest::Approx(cfg.strength));
    CHECK(s.max_offset_px == doctest::Approx(cfg.max_offset_frac * static_cast<double>(side)));
  }
}

TEST_CASE("warp by a zero field is the identity") {
  const Tensor patch = testutil::random_tensor({3, 12, 12}, 19);
  const Tensor zero({2, 12, 12});
  const Var out = warp_by_field(Var(patch), zero);
  for (size_t i = 0; i < patch.storage().size(); ++i) {
    CHECK(out.value().storage()[i] == doctest::Approx(patch.storage()[i]).epsilon(1e-12));
  }
}

TEST_CASE("warp by a constant integer field shifts the raster") {
  const Tensor patch = testutil::random_tensor({1, 8, 8}, 23);
  Tensor field({2, 8, 8});
  for (int64_t r = 0; r < 8; ++r) {
    for (int64_t c = 0; c < 8; ++c) field.at({0, r, c}) = 2.0;  // sample two pixels to the right
  }
  const Var out = warp_by_field(Var(patch), field);
  for (int64_t r = 0; r < 8; ++r) {
    for (int64_t c = 0; c < 6; ++c) {
      CHECK(out.value().at({0, r, c}) == doctest::Approx(patch.at({0, r, c + 2})).epsilon(1e-12));
    }
  }
}

TEST_CASE("crease spec survives a JSON round trip") {
  Rng rng(88);
  const CreaseSpec s = sample_crease(rng, CreaseConfig{}, 64);
  const CreaseSpec t = CreaseSpec::from_json(s.to_json());
  CHECK(t.vantage_u == doctest::Approx(s.vantage_u).epsilon(1e-15));
  CHECK(t.vantage_v == doctest::Approx(s.vantage_v).epsilon(1e-15));
  CHECK(t.direction_deg == doctest::Approx(s.direction_deg).epsilon(1e-15));
  CHECK(t.strength == doctest::Approx(s.strength).epsilon(1e-15));
  CHECK(t.max_offset_px == doctest::Approx(s.max_offset_px).epsilon(1e-15));
}

TEST_CASE("side_for_area_fraction is floor(sqrt(f*W*H))") {
  CHECK(side_for_area_fraction(0.25, 224, 224) == 112);
  CHECK(side_for_area_fraction(0.60, 64, 64) == 49);
  CHECK(side_for_area_fraction(1.0, 100, 100) == 100);
  CHECK(side_for_area_fraction(0.3, 224, 224) == 122);  // floor(sqrt(15052.8)) = floor(122.69)
}

TEST_CASE("place_patch keeps the patch fully inside and reports the slot") {
  const Tensor image = Tensor::full({3, 32, 32}, 0.0);
  const Tensor patch = Tensor::full({3, 10, 10}, 1.0);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    auto [out, placement] = place_patch(Var(image), Var(patch), rng);
    CHECK(placement.x >= 0);
    CHECK(placement.y >= 0);
    CHECK(placement.x + placement.side <= 32);
    CHECK(placement.y + placement.side <= 32);
    CHECK(placement.side == 10);
    CHECK(placement.image_w == 32);
    CHECK(placement.image_h == 32);
    CHECK(placement.area_fraction == doctest::Approx(100.0 / 1024.0));
    // Every pixel inside the slot is patch, everything else image.
    for (int64_t r = 0; r < 32; ++r) {
      for (int64_t c = 0; c < 32; ++c) {
        const bool inside = r >= placement.y && r < placement.y + 10 && c >= placement.x && c < placement.x + 10;
        CHECK(out.value().at({0, r, c}) == doctest::Approx(inside ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("place_patch_resized draws area fractions inside the window") {
  const Tensor image = Tensor::full({3, 64, 64}, 0.0);
  const Tensor patch = testutil::random_tensor({3, 16, 16}, 41);
  Rng rng(6);
  for (int i = 0; i < 500; ++i) {
    auto [out, placement] = place_patch_resized(Var(image), Var(patch), rng, 0.30, 0.60);
    const int64_t min_side = side_for_area_fraction(0.30, 64, 64);
    const int64_t max_side = side_for_area_fraction(0.60, 64, 64);
    CHECK(placement.side >= min_side);
    CHECK(placement.side <= max_side);
    CHECK(placement.x + placement.side <= 64);
    CHECK(placement.y + placement.side <= 64);
  }
}

TEST_CASE("place_patch_at reproduces a recorded placement exactly") {
  const Tensor image = testutil::random_tensor({3, 48, 48}, 43);
  const Tensor patch = testutil::random_tensor({3, 12, 12}, 44);
  Rng rng(7);
  auto [out1, placement] = place_patch(Var(image), Var(patch), rng);
  auto [out2, placement2] = place_patch_at(Var(image), Var(patch), placement);
  CHECK(placement2.x == placement.x);
  CHECK(placement2.y == placement.y);
  CHECK(placement2.side == placement.side);
  for (size_t i = 0; i < out1.value().storage().size(); ++i) {
    CHECK(out2.value().storage()[i] == doctest::Approx(out1.value().storage()[i]).epsilon(1e-15));
  }
}

TEST_CASE("placement draw order is fraction, x, y from one stream") {
  // Two rngs with the same seed: consuming a draw from one must desync it.
  const Tensor image = Tensor::full({3, 64, 64}, 0.0);
  const Tensor patch = Tensor::full({3, 16, 16}, 1.0);
  Rng a(90);
  Rng b(90);
  auto [out_a, pa] = place_patch_resized(Var(image), Var(patch), a, 0.30, 0.60);
  auto [out_b, pb] = place_patch_resized(Var(image), Var(patch), b, 0.30, 0.60);
  CHECK(pa.x == pb.x);
  CHECK(pa.y == pb.y);
  CHECK(pa.side == pb.side);
}
