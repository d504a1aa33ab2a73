// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "patchforge/errors.hpp"
#include "patchforge/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little endian; big endian hosts need byte swapping");

namespace patchforge {
namespace {

constexpr char kMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', '0', '1'};
constexpr const char* kFormat = "patchforge-checkpoint-v1";

void write_u64(std::ostream& out, uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, sizeof buf);
  out.write(buf, sizeof buf);
}

uint64_t payload_hash(const VitModel& model) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, var] : model.params()) {
    const Tensor& t = var.value();
    h = fnv1a64(t.data(), static_cast<size_t>(t.numel()) * sizeof(double), h);
  }
  return h;
}

}  // namespace

void save_checkpoint(const VitModel& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  nlohmann::ordered_json index = nlohmann::ordered_json::array();
  int64_t offset = 0;
  for (const auto& [name, var] : model.params()) {
    nlohmann::ordered_json row;
    row["name"] = name;
    row["shape"] = var.shape();
    row["offset"] = offset;
    index.push_back(std::move(row));
    offset += var.numel();
  }

  nlohmann::ordered_json doc;
  doc["format"] = kFormat;
  doc["backbone"] = meta.backbone_id;
  doc["config"] = model.config().to_json();
  doc["freeze_plan"] = meta.freeze_plan.to_json();
  doc["seed"] = meta.seed;
  doc["normalization"] = meta.normalization.to_json();
  doc["metrics"] = meta.metrics.is_null() ? nlohmann::ordered_json() : meta.metrics;
  doc["tensors"] = std::move(index);
  doc["payload_doubles"] = offset;
  doc["payload_fnv1a64"] = hex64(payload_hash(model));
  const std::string meta_bytes = doc.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot open '{}' for writing", tmp.string()));
    out.write(kMagic, sizeof kMagic);
    write_u64(out, meta_bytes.size());
    out.write(meta_bytes.data(), static_cast<std::streamsize>(meta_bytes.size()));
    for (const auto& [name, var] : model.params()) {
      const Tensor& t = var.value();
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
    }
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(fmt::format("write to '{}' failed", tmp.string()));
    }
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::error_code ec;
  const uint64_t file_size = std::filesystem::file_size(path, ec);
  if (ec) throw UserError(fmt::format("cannot read checkpoint '{}': {}", path.string(), ec.message()));

  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError(fmt::format("cannot open checkpoint '{}'", path.string()));

  char magic[8];
  uint64_t meta_len = 0;
  if (file_size < sizeof magic + sizeof meta_len) {
    throw Error(fmt::format("checkpoint '{}' is truncated (only {} bytes)", path.string(), file_size));
  }
  in.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw Error(fmt::format("'{}' is not a patchforge checkpoint (bad magic)", path.string()));
  }
  in.read(reinterpret_cast<char*>(&meta_len), sizeof meta_len);
  if (sizeof magic + sizeof meta_len + meta_len > file_size) {
    throw Error(fmt::format("checkpoint '{}' is truncated inside its metadata block", path.string()));
  }

  std::string meta_bytes(meta_len, '\0');
  in.read(meta_bytes.data(), static_cast<std::streamsize>(meta_len));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(meta_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(fmt::format("checkpoint '{}' has unparseable metadata: {}", path.string(), e.what()));
  }

  try {
    if (doc.at("format").get<std::string>() != kFormat) {
      throw Error(fmt::format("checkpoint '{}' has unsupported format '{}'", path.string(),
                              doc.at("format").get<std::string>()));
    }

    CheckpointMeta meta;
    meta.backbone_id = doc.at("backbone").get<std::string>();
    meta.freeze_plan = FreezePlan::from_json(doc.at("freeze_plan"));
    meta.seed = doc.at("seed").get<uint64_t>();
    meta.normalization = Normalization::from_json(doc.at("normalization"));
    if (!doc.at("metrics").is_null()) meta.metrics = doc.at("metrics");

    VitModel model(VitConfig::from_json(doc.at("config")));

    const auto& index = doc.at("tensors");
    auto& params = model.params();
    if (index.size() != params.size()) {
      throw Error(fmt::format("checkpoint '{}' lists {} tensors, model has {}", path.string(), index.size(),
                              params.size()));
    }
    const int64_t total = doc.at("payload_doubles").get<int64_t>();
    const uint64_t expect_size = sizeof magic + sizeof meta_len + meta_len +
                                 static_cast<uint64_t>(total) * sizeof(double);
    if (file_size != expect_size) {
      throw Error(fmt::format("checkpoint '{}' is {} bytes, expected {}", path.string(), file_size, expect_size));
    }

    uint64_t h = 0xcbf29ce484222325ull;
    int64_t offset = 0;
    for (size_t i = 0; i < params.size(); ++i) {
      const auto& row = index.at(i);
      auto& [name, var] = params[i];
      if (row.at("name").get<std::string>() != name) {
        throw Error(fmt::format("checkpoint '{}' tensor {} is '{}', expected '{}'", path.string(), i,
                                row.at("name").get<std::string>(), name));
      }
      if (row.at("shape").get<Shape>() != var.shape()) {
        throw Error(fmt::format("checkpoint '{}' tensor '{}' has mismatched shape", path.string(), name));
      }
      if (row.at("offset").get<int64_t>() != offset) {
        throw Error(fmt::format("checkpoint '{}' tensor '{}' has inconsistent offset", path.string(), name));
      }
      Tensor& t = var.value();
      const std::streamsize bytes = t.numel() * static_cast<int64_t>(sizeof(double));
      in.read(reinterpret_cast<char*>(t.data()), bytes);
      if (in.gcount() != bytes) {
        throw Error(fmt::format("checkpoint '{}' payload ends early in tensor '{}'", path.string(), name));
      }
      h = fnv1a64(t.data(), static_cast<size_t>(bytes), h);
      offset += t.numel();
    }
    if (hex64(h) != doc.at("payload_fnv1a64").get<std::string>()) {
      throw Error(fmt::format("checkpoint '{}' payload hash mismatch (corrupt file)", path.string()));
    }

    apply_freeze_plan(model, meta.freeze_plan);
    return LoadedCheckpoint{std::move(model), std::move(meta)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(fmt::format("checkpoint '{}' has malformed metadata: {}", path.string(), e.what()));
  }
}

}  // namespace patchforge
