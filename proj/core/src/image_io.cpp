// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>

#include "patchforge/errors.hpp"
#include "patchforge/warp.hpp"

namespace patchforge {

namespace {

double clamp01d(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw Error(fmt::format("cannot read image '{}'", path.string()));

  cv::Mat bgr;
  if (raw.channels() == 1) {
    cv::Mat tmp[] = {raw, raw, raw};
    cv::merge(tmp, 3, bgr);
  } else if (raw.channels() == 4) {
    cv::Mat mixed(raw.rows, raw.cols, CV_MAKETYPE(raw.depth(), 3));
    const int from_to[] = {0, 0, 1, 1, 2, 2};
    cv::mixChannels(&raw, 1, &mixed, 1, from_to, 3);
    bgr = mixed;
  } else if (raw.channels() == 3) {
    bgr = raw;
  } else {
    throw Error(fmt::format("unsupported channel count {} in '{}'", raw.channels(), path.string()));
  }

  const int h = bgr.rows;
  const int w = bgr.cols;
  Tensor out({3, h, w});
  double* r = out.data();
  double* g = out.data() + static_cast<int64_t>(h) * w;
  double* b = out.data() + 2 * static_cast<int64_t>(h) * w;
  if (bgr.depth() == CV_8U) {
    for (int y = 0; y < h; ++y) {
      const auto* row = bgr.ptr<cv::Vec3b>(y);
      for (int x = 0; x < w; ++x) {
        const int64_t i = static_cast<int64_t>(y) * w + x;
        b[i] = row[x][0] / 255.0;
        g[i] = row[x][1] / 255.0;
        r[i] = row[x][2] / 255.0;
      }
    }
  } else if (bgr.depth() == CV_16U) {
    for (int y = 0; y < h; ++y) {
      const auto* row = bgr.ptr<cv::Vec3w>(y);
      for (int x = 0; x < w; ++x) {
        const int64_t i = static_cast<int64_t>(y) * w + x;
        b[i] = row[x][0] / 65535.0;
        g[i] = row[x][1] / 65535.0;
        r[i] = row[x][2] / 65535.0;
      }
    }
  } else {
    throw Error(fmt::format("unsupported bit depth in '{}'", path.string()));
  }
  return out;
}

namespace {

template <typename Pix, int Depth>
void encode_png(const std::filesystem::path& path, const Tensor& image, double peak) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != 3) {
    throw Error(fmt::format("save_png: expected (3,H,W) image, got {}", shape_str(s)));
  }
  const int h = static_cast<int>(s[1]);
  const int w = static_cast<int>(s[2]);
  const double* r = image.data();
  const double* g = image.data() + static_cast<int64_t>(h) * w;
  const double* b = image.data() + 2 * static_cast<int64_t>(h) * w;
  cv::Mat bgr(h, w, CV_MAKETYPE(Depth, 3));
  for (int y = 0; y < h; ++y) {
    auto* row = bgr.ptr<Pix>(y);
    for (int x = 0; x < w; ++x) {
      const int64_t i = static_cast<int64_t>(y) * w + x;
      row[x][0] = static_cast<typename Pix::value_type>(std::lround(clamp01d(b[i]) * peak));
      row[x][1] = static_cast<typename Pix::value_type>(std::lround(clamp01d(g[i]) * peak));
      row[x][2] = static_cast<typename Pix::value_type>(std::lround(clamp01d(r[i]) * peak));
    }
  }
  if (!cv::imwrite(path.string(), bgr)) {
    throw Error(fmt::format("cannot write image '{}'", path.string()));
  }
}

}  // namespace

void save_png(const std::filesystem::path& path, const Tensor& image) {
  encode_png<cv::Vec3b, CV_8U>(path, image, 255.0);
}

void save_png16(const std::filesystem::path& path, const Tensor& image) {
  encode_png<cv::Vec3w, CV_16U>(path, image, 65535.0);
}

Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w) {
  NoGradGuard ng;
  return resize_image(Var(image.clone()), out_h, out_w).value();
}

}  // namespace patchforge
