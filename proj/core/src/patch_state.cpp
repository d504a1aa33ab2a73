// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/patch_state.hpp"

#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "patchforge/errors.hpp"
#include "patchforge/image_io.hpp"

namespace patchforge {
namespace {

constexpr const char* kMetaFormat = "patchforge-patch-v1";
constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string b64_encode(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (size_t i = 0; i < n; i += 3) {
    uint32_t chunk = static_cast<uint32_t>(p[i]) << 16;
    if (i + 1 < n) chunk |= static_cast<uint32_t>(p[i + 1]) << 8;
    if (i + 2 < n) chunk |= static_cast<uint32_t>(p[i + 2]);
    out.push_back(kB64Alphabet[(chunk >> 18) & 63]);
    out.push_back(kB64Alphabet[(chunk >> 12) & 63]);
    out.push_back(i + 1 < n ? kB64Alphabet[(chunk >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? kB64Alphabet[chunk & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> b64_decode(const std::string& text) {
  int8_t lut[256];
  std::memset(lut, -1, sizeof lut);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64Alphabet[i])] = static_cast<int8_t>(i);
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  uint32_t chunk = 0;
  int bits = 0;
  for (char ch : text) {
    if (ch == '=') break;
    const int8_t v = lut[static_cast<unsigned char>(ch)];
    if (v < 0) throw Error("invalid base64 payload in patch sidecar");
    chunk = (chunk << 6) | static_cast<uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((chunk >> bits) & 0xff));
    }
  }
  return out;
}

std::string tensor_b64(const Tensor& t) {
  return b64_encode(t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
}

Tensor tensor_from_b64(const std::string& text, const Shape& shape) {
  Tensor t(shape);
  const std::vector<unsigned char> bytes = b64_decode(text);
  const size_t want = static_cast<size_t>(t.numel()) * sizeof(double);
  if (bytes.size() != want) {
    throw Error(fmt::format("patch sidecar payload is {} bytes, expected {}", bytes.size(), want));
  }
  std::memcpy(t.data(), bytes.data(), want);
  return t;
}

void check_patch_shape(const Tensor& t, const char* what) {
  const Shape& s = t.shape();
  if (s.size() != 3 || s[0] != 3 || s[1] != s[2] || s[1] < 1) {
    throw Error(fmt::format("{} must be (3, side, side), got {}", what, shape_str(s)));
  }
}

}  // namespace

PatchState init_patch(int64_t side, uint64_t seed) {
  if (side < 1) throw UserError("patch side must be at least 1");
  PatchState state;
  state.pixels = Tensor::full({3, side, side}, 0.5);
  state.reference = state.pixels.clone();
  state.seed = seed;
  return state;
}

PatchState init_patch_from(const Tensor& reference_image, int64_t side, uint64_t seed) {
  if (side < 1) throw UserError("patch side must be at least 1");
  const Shape& s = reference_image.shape();
  if (s.size() != 3 || s[0] != 3) {
    throw Error(fmt::format("reference image must be (3,H,W), got {}", shape_str(s)));
  }
  PatchState state;
  state.pixels = resize_bilinear(reference_image, side, side);
  state.reference = state.pixels.clone();
  state.seed = seed;
  return state;
}

double patch_design_area_fraction(int64_t side, int64_t image_size) {
  return static_cast<double>(side * side) / static_cast<double>(image_size * image_size);
}

nlohmann::ordered_json PatchMeta::to_json() const {
  nlohmann::ordered_json doc;
  doc["seed"] = seed;
  doc["steps"] = steps;
  doc["config_hash"] = config_hash;
  doc["source_model_id"] = source_model_id;
  doc["design_area_fraction"] = design_area_fraction;
  return doc;
}

PatchMeta PatchMeta::from_json(const nlohmann::json& doc) {
  PatchMeta meta;
  meta.seed = doc.at("seed").get<uint64_t>();
  meta.steps = doc.at("steps").get<int64_t>();
  meta.config_hash = doc.at("config_hash").get<std::string>();
  meta.source_model_id = doc.at("source_model_id").get<std::string>();
  meta.design_area_fraction = doc.at("design_area_fraction").get<double>();
  return meta;
}

void export_patch(const PatchState& state, const PatchMeta& meta, const std::filesystem::path& dir) {
  check_patch_shape(state.pixels, "patch pixels");
  check_patch_shape(state.reference, "patch reference");
  std::filesystem::create_directories(dir);
  save_png16(dir / "patch.png", state.pixels);

  nlohmann::ordered_json doc;
  doc["format"] = kMetaFormat;
  doc["meta"] = meta.to_json();
  doc["side"] = state.pixels.shape()[1];
  doc["step"] = state.step;
  doc["state_seed"] = state.seed;
  doc["pixels_f64"] = tensor_b64(state.pixels);
  doc["reference_f64"] = tensor_b64(state.reference);

  std::ofstream out(dir / "patch.meta", std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", (dir / "patch.meta").string()));
  out << doc.dump(2) << '\n';
}

ImportedPatch import_patch(const std::filesystem::path& path) {
  std::filesystem::path png = path;
  if (std::filesystem::is_directory(path)) png = path / "patch.png";
  if (!std::filesystem::exists(png)) {
    throw UserError(fmt::format("patch raster '{}' not found; craft-patch produces it", png.string()));
  }
  std::filesystem::path sidecar = png;
  sidecar.replace_extension(".meta");

  ImportedPatch imported;
  if (std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar, std::ios::binary);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(fmt::format("patch sidecar '{}' is unparseable: {}", sidecar.string(), e.what()));
    }
    try {
      if (doc.at("format").get<std::string>() != kMetaFormat) {
        throw Error(fmt::format("patch sidecar '{}' has unsupported format", sidecar.string()));
      }
      const int64_t side = doc.at("side").get<int64_t>();
      const Shape shape{3, side, side};
      imported.state.pixels = tensor_from_b64(doc.at("pixels_f64").get<std::string>(), shape);
      imported.state.reference = tensor_from_b64(doc.at("reference_f64").get<std::string>(), shape);
      imported.state.step = doc.at("step").get<int64_t>();
      imported.state.seed = doc.at("state_seed").get<uint64_t>();
      imported.meta = PatchMeta::from_json(doc.at("meta"));
    } catch (const nlohmann::json::exception& e) {
      throw Error(fmt::format("patch sidecar '{}' is malformed: {}", sidecar.string(), e.what()));
    }
  } else {
    imported.state.pixels = load_image(png);
    check_patch_shape(imported.state.pixels, "imported patch raster");
    imported.state.reference = imported.state.pixels.clone();
    imported.state.seed = 0;
    imported.meta.seed = 0;
    imported.meta.design_area_fraction = patch_design_area_fraction(imported.state.pixels.shape()[1]);
  }
  return imported;
}

}  // namespace patchforge
