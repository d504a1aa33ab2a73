// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchforge/tensor.hpp"

namespace patchforge {

/// Float box in source-image pixels, origin top-left.
struct BoxF {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

/// Integer pixel rectangle after outward rounding.
struct PixelBox {
  int64_t x = 0;
  int64_t y = 0;
  int64_t w = 0;
  int64_t h = 0;
};

enum class CropLabel { person, non_person };
enum class SplitId { train, val, test };

std::string to_string(CropLabel label);
std::string to_string(SplitId split);
CropLabel crop_label_from_string(const std::string& s);
SplitId split_from_string(const std::string& s);

struct AnnotationRecord {
  int64_t id = 0;
  int64_t image_id = 0;
  std::string category;
  BoxF bbox;
};

struct ImageInfo {
  int64_t id = 0;
  std::string file_name;
  int64_t width = 0;
  int64_t height = 0;
};

/// Parsed COCO-style annotation set. Malformed records are dropped and
/// reported in `rejected`, one line per record, so a partially bad file
/// still yields a usable dataset.
struct CocoData {
  std::vector<ImageInfo> images;
  std::vector<AnnotationRecord> annotations;
  std::vector<std::string> rejected;

  std::unordered_map<int64_t, ImageInfo> image_index;
  std::unordered_map<int64_t, std::vector<size_t>> annotations_by_image;

  const ImageInfo* find_image(int64_t id) const;
};

CocoData parse_coco(const nlohmann::json& doc);
CocoData parse_coco_file(const std::filesystem::path& path);

/// Image ids partitioned by the person predicate: 1-3 person annotations
/// make a person image, zero make a non-person image, 4+ are excluded.
struct ClassPartition {
  std::vector<int64_t> person_images;
  std::vector<int64_t> nonperson_images;
};

ClassPartition filter_annotations(const CocoData& coco);

/// Grow each side by padding_fraction of its own length (half per end),
/// then clip against the image rectangle. Degenerate boxes are rejected.
BoxF compute_padded_box(const BoxF& bbox, double padding_fraction, int64_t image_w, int64_t image_h);

/// Outward rounding to whole pixels: floor the origin, ceil the extent,
/// then clip. Rejects rectangles that collapse to zero area.
PixelBox pixel_box(const BoxF& box, int64_t image_w, int64_t image_h);

struct SplitSizes {
  int64_t train = 0;
  int64_t val = 0;
  int64_t test = 0;
};

struct CropSpec {
  int64_t image_id = 0;
  int64_t annotation_id = 0;
  BoxF padded_box;
  CropLabel label = CropLabel::person;
  SplitId split = SplitId::train;
  std::string file;         // crop raster path relative to the dataset root
  std::string source_file;  // source image path relative to the image store
};

struct DatasetManifest {
  double padding_fraction = 0.15;
  uint64_t seed = 2;
  SplitSizes split_sizes;  // images per split, both classes combined
  std::vector<CropSpec> crops;

  int64_t crop_count(SplitId split, CropLabel label) const;

  nlohmann::ordered_json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

/// Assign image ids to class-balanced splits of exactly the requested
/// sizes (ids sorted ascending, then a seeded shuffle per class) and emit
/// the crop manifest: person images contribute their person boxes, rest
/// contribute their object boxes, at most 3 crops per image either way.
DatasetManifest build_splits(const CocoData& coco, const ClassPartition& pools, const SplitSizes& sizes,
                             double padding_fraction, uint64_t seed);

struct ExtractionFailure {
  std::string file;
  std::string reason;
};

struct ExtractionSummary {
  int64_t written = 0;
  std::vector<ExtractionFailure> failures;
};

/// Write one raster per CropSpec under out_dir; per-crop failures are
/// recorded and the run continues.
ExtractionSummary extract_crops(const DatasetManifest& manifest, const std::filesystem::path& image_dir,
                                const std::filesystem::path& out_dir);

enum class AttackSubsetSource { held_out, train };

/// Seeded draw of n crops for patch crafting, disjoint from the training
/// split when source is held_out (the default reading).
std::vector<CropSpec> select_attack_subset(const DatasetManifest& manifest, int64_t n, uint64_t seed,
                                           AttackSubsetSource source = AttackSubsetSource::held_out);

/// Manifest rows of one split, in manifest order.
std::vector<CropSpec> split_crops(const DatasetManifest& manifest, SplitId split);

struct LabeledImages {
  std::vector<Tensor> images;  // each (3, S, S), raw [0,1]
  std::vector<int> labels;     // 1 = person, 0 = non-person
};

/// Load crop rasters from the dataset directory and resize each to
/// image_size x image_size. Missing or unreadable files throw.
LabeledImages load_crops(const std::vector<CropSpec>& crops, const std::filesystem::path& dataset_dir,
                         int64_t image_size);

}  // namespace patchforge
