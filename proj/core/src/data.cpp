// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "patchforge/errors.hpp"
#include "patchforge/image_io.hpp"
#include "patchforge/rng.hpp"

namespace patchforge {

namespace {

constexpr int64_t kMaxCropsPerImage = 3;

}  // namespace

std::string to_string(CropLabel label) { return label == CropLabel::person ? "person" : "non_person"; }
std::string to_string(SplitId split) {
  switch (split) {
    case SplitId::train: return "train";
    case SplitId::val: return "val";
    case SplitId::test: return "test";
  }
  return "?";
}

CropLabel crop_label_from_string(const std::string& s) {
  if (s == "person") return CropLabel::person;
  if (s == "non_person") return CropLabel::non_person;
  throw Error(fmt::format("unknown crop label '{}'", s));
}

SplitId split_from_string(const std::string& s) {
  if (s == "train") return SplitId::train;
  if (s == "val") return SplitId::val;
  if (s == "test") return SplitId::test;
  throw Error(fmt::format("unknown split '{}'", s));
}

const ImageInfo* CocoData::find_image(int64_t id) const {
  auto it = image_index.find(id);
  return it == image_index.end() ? nullptr : &it->second;
}

CocoData parse_coco(const nlohmann::json& doc) {
  CocoData out;
  if (!doc.is_object()) throw UserError("annotation document is not a JSON object");

  std::unordered_map<int64_t, std::string> categories;
  for (const auto& c : doc.value("categories", nlohmann::json::array())) {
    if (!c.contains("id") || !c.contains("name")) {
      out.rejected.push_back("category record missing id/name");
      continue;
    }
    categories[c["id"].get<int64_t>()] = c["name"].get<std::string>();
  }

  for (const auto& im : doc.value("images", nlohmann::json::array())) {
    if (!im.contains("id") || !im.contains("file_name") || !im.contains("width") || !im.contains("height")) {
      out.rejected.push_back(fmt::format("image record {} missing required fields", im.value("id", -1)));
      continue;
    }
    ImageInfo info;
    info.id = im["id"].get<int64_t>();
    info.file_name = im["file_name"].get<std::string>();
    info.width = im["width"].get<int64_t>();
    info.height = im["height"].get<int64_t>();
    if (info.width <= 0 || info.height <= 0) {
      out.rejected.push_back(fmt::format("image {} has non-positive size", info.id));
      continue;
    }
    out.image_index.emplace(info.id, info);
    out.images.push_back(std::move(info));
  }

  for (const auto& a : doc.value("annotations", nlohmann::json::array())) {
    const int64_t ann_id = a.value("id", int64_t{-1});
    if (!a.contains("id") || !a.contains("image_id") || !a.contains("category_id") || !a.contains("bbox") ||
        !a["bbox"].is_array() || a["bbox"].size() != 4) {
      out.rejected.push_back(fmt::format("annotation {} missing required fields", ann_id));
      continue;
    }
    AnnotationRecord rec;
    rec.id = ann_id;
    rec.image_id = a["image_id"].get<int64_t>();
    const int64_t cat = a["category_id"].get<int64_t>();
    auto cit = categories.find(cat);
    if (cit == categories.end()) {
      out.rejected.push_back(fmt::format("annotation {} references unknown category {}", ann_id, cat));
      continue;
    }
    rec.category = cit->second;
    rec.bbox.x = a["bbox"][0].get<double>();
    rec.bbox.y = a["bbox"][1].get<double>();
    rec.bbox.w = a["bbox"][2].get<double>();
    rec.bbox.h = a["bbox"][3].get<double>();
    if (!(rec.bbox.w > 0.0) || !(rec.bbox.h > 0.0)) {
      out.rejected.push_back(fmt::format("annotation {} has degenerate bbox", ann_id));
      continue;
    }
    if (out.image_index.find(rec.image_id) == out.image_index.end()) {
      out.rejected.push_back(fmt::format("annotation {} references unknown image {}", ann_id, rec.image_id));
      continue;
    }
    out.annotations_by_image[rec.image_id].push_back(out.annotations.size());
    out.annotations.push_back(std::move(rec));
  }
  return out;
}

CocoData parse_coco_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError(fmt::format("cannot open annotation file '{}'", path.string()));
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw UserError(fmt::format("annotation file '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return parse_coco(doc);
}

ClassPartition filter_annotations(const CocoData& coco) {
  ClassPartition out;
  for (const ImageInfo& im : coco.images) {
    int64_t person_boxes = 0;
    auto it = coco.annotations_by_image.find(im.id);
    if (it != coco.annotations_by_image.end()) {
      for (size_t idx : it->second) {
        if (coco.annotations[idx].category == "person") ++person_boxes;
      }
    }
    if (person_boxes >= 1 && person_boxes <= 3) {
      out.person_images.push_back(im.id);
    } else if (person_boxes == 0) {
      out.nonperson_images.push_back(im.id);
    }
    // 4+ person boxes: excluded from both pools.
  }
  std::sort(out.person_images.begin(), out.person_images.end());
  std::sort(out.nonperson_images.begin(), out.nonperson_images.end());
  return out;
}

BoxF compute_padded_box(const BoxF& bbox, double padding_fraction, int64_t image_w, int64_t image_h) {
  if (padding_fraction < 0.0) throw Error("padding_fraction must be non-negative");
  if (!(bbox.w > 0.0) || !(bbox.h > 0.0)) {
    throw Error(fmt::format("degenerate bbox ({}, {}, {}, {})", bbox.x, bbox.y, bbox.w, bbox.h));
  }
  // Clip the input against the image first so the growth is relative to the
  // visible part of the box.
  const double ix0 = std::max(0.0, bbox.x);
  const double iy0 = std::max(0.0, bbox.y);
  const double ix1 = std::min(static_cast<double>(image_w), bbox.x + bbox.w);
  const double iy1 = std::min(static_cast<double>(image_h), bbox.y + bbox.h);
  if (!(ix1 > ix0) || !(iy1 > iy0)) {
    throw Error(fmt::format("bbox ({}, {}, {}, {}) lies outside the {}x{} image", bbox.x, bbox.y, bbox.w, bbox.h,
                            image_w, image_h));
  }
  const double grow_x = (ix1 - ix0) * padding_fraction * 0.5;
  const double grow_y = (iy1 - iy0) * padding_fraction * 0.5;
  const double x0 = std::max(0.0, ix0 - grow_x);
  const double y0 = std::max(0.0, iy0 - grow_y);
  const double x1 = std::min(static_cast<double>(image_w), ix1 + grow_x);
  const double y1 = std::min(static_cast<double>(image_h), iy1 + grow_y);
  return BoxF{x0, y0, x1 - x0, y1 - y0};
}

PixelBox pixel_box(const BoxF& box, int64_t image_w, int64_t image_h) {
  int64_t x0 = static_cast<int64_t>(std::floor(box.x));
  int64_t y0 = static_cast<int64_t>(std::floor(box.y));
  int64_t x1 = static_cast<int64_t>(std::ceil(box.x + box.w));
  int64_t y1 = static_cast<int64_t>(std::ceil(box.y + box.h));
  x0 = std::max<int64_t>(0, x0);
  y0 = std::max<int64_t>(0, y0);
  x1 = std::min(image_w, x1);
  y1 = std::min(image_h, y1);
  if (x1 <= x0 || y1 <= y0) {
    throw Error(fmt::format("box ({}, {}, {}, {}) collapses to zero pixels in a {}x{} image", box.x, box.y, box.w,
                            box.h, image_w, image_h));
  }
  return PixelBox{x0, y0, x1 - x0, y1 - y0};
}

int64_t DatasetManifest::crop_count(SplitId split, CropLabel label) const {
  int64_t n = 0;
  for (const CropSpec& c : crops) {
    if (c.split == split && c.label == label) ++n;
  }
  return n;
}

nlohmann::ordered_json DatasetManifest::to_json() const {
  nlohmann::ordered_json doc;
  doc["format"] = "patchforge-manifest-v1";
  doc["seed"] = seed;
  doc["padding_fraction"] = padding_fraction;
  doc["split_sizes"] = {{"train", split_sizes.train}, {"val", split_sizes.val}, {"test", split_sizes.test}};
  nlohmann::ordered_json counts;
  for (SplitId split : {SplitId::train, SplitId::val, SplitId::test}) {
    nlohmann::ordered_json row;
    for (CropLabel label : {CropLabel::person, CropLabel::non_person}) {
      row[to_string(label)] = crop_count(split, label);
    }
    counts[to_string(split)] = std::move(row);
  }
  doc["crop_counts"] = std::move(counts);
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const CropSpec& c : crops) {
    nlohmann::ordered_json row;
    row["image_id"] = c.image_id;
    row["annotation_id"] = c.annotation_id;
    row["file"] = c.file;
    row["source_file"] = c.source_file;
    row["label"] = to_string(c.label);
    row["split"] = to_string(c.split);
    row["padded_box"] = {c.padded_box.x, c.padded_box.y, c.padded_box.w, c.padded_box.h};
    arr.push_back(std::move(row));
  }
  doc["crops"] = std::move(arr);
  return doc;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& doc) {
  DatasetManifest m;
  if (doc.value("format", "") != std::string("patchforge-manifest-v1")) {
    throw Error("unrecognized manifest format");
  }
  m.seed = doc.at("seed").get<uint64_t>();
  m.padding_fraction = doc.at("padding_fraction").get<double>();
  m.split_sizes.train = doc.at("split_sizes").at("train").get<int64_t>();
  m.split_sizes.val = doc.at("split_sizes").at("val").get<int64_t>();
  m.split_sizes.test = doc.at("split_sizes").at("test").get<int64_t>();
  for (const auto& row : doc.at("crops")) {
    CropSpec c;
    c.image_id = row.at("image_id").get<int64_t>();
    c.annotation_id = row.at("annotation_id").get<int64_t>();
    c.file = row.at("file").get<std::string>();
    c.source_file = row.at("source_file").get<std::string>();
    c.label = crop_label_from_string(row.at("label").get<std::string>());
    c.split = split_from_string(row.at("split").get<std::string>());
    const auto& b = row.at("padded_box");
    c.padded_box = BoxF{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
    m.crops.push_back(std::move(c));
  }
  return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write manifest '{}'", path.string()));
  out << to_json().dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError(fmt::format("cannot open manifest '{}'", path.string()));
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw UserError(fmt::format("manifest '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return from_json(doc);
}

namespace {

/// Annotation indices that produce crops for one image: person images use
/// their person boxes, non-person images any object boxes; annotation-id
/// ascending, at most kMaxCropsPerImage.
std::vector<size_t> crop_annotations(const CocoData& coco, int64_t image_id, CropLabel label) {
  std::vector<size_t> picked;
  auto it = coco.annotations_by_image.find(image_id);
  if (it == coco.annotations_by_image.end()) return picked;
  for (size_t idx : it->second) {
    if (label == CropLabel::person && coco.annotations[idx].category != "person") continue;
    picked.push_back(idx);
  }
  std::sort(picked.begin(), picked.end(),
            [&](size_t a, size_t b) { return coco.annotations[a].id < coco.annotations[b].id; });
  if (picked.size() > static_cast<size_t>(kMaxCropsPerImage)) picked.resize(kMaxCropsPerImage);
  return picked;
}

}  // namespace

DatasetManifest build_splits(const CocoData& coco, const ClassPartition& pools, const SplitSizes& sizes,
                             double padding_fraction, uint64_t seed) {
  for (int64_t n : {sizes.train, sizes.val, sizes.test}) {
    if (n < 0) throw UserError("split sizes must be non-negative");
    if (n % 2 != 0) throw UserError(fmt::format("split size {} is odd; exact class balance needs even sizes", n));
  }
  const int64_t per_class = (sizes.train + sizes.val + sizes.test) / 2;

  // Images that cannot produce a crop would silently shrink a split, so
  // they are excluded from the draw up front.
  auto usable = [&](const std::vector<int64_t>& pool, CropLabel label) {
    std::vector<int64_t> ids;
    for (int64_t id : pool) {
      if (!crop_annotations(coco, id, label).empty()) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  std::vector<int64_t> person = usable(pools.person_images, CropLabel::person);
  std::vector<int64_t> nonperson = usable(pools.nonperson_images, CropLabel::non_person);

  if (static_cast<int64_t>(person.size()) < per_class) {
    throw UserError(fmt::format("person pool has {} usable images, {} required (short by {})", person.size(),
                                per_class, per_class - static_cast<int64_t>(person.size())));
  }
  if (static_cast<int64_t>(nonperson.size()) < per_class) {
    throw UserError(fmt::format("non_person pool has {} usable images, {} required (short by {})", nonperson.size(),
                                per_class, per_class - static_cast<int64_t>(nonperson.size())));
  }

  Rng master(seed);
  Rng person_rng = master.child(0);
  Rng nonperson_rng = master.child(1);
  person_rng.shuffle(person);
  nonperson_rng.shuffle(nonperson);

  DatasetManifest manifest;
  manifest.padding_fraction = padding_fraction;
  manifest.seed = seed;
  manifest.split_sizes = sizes;

  const SplitId split_order[] = {SplitId::train, SplitId::val, SplitId::test};
  const int64_t quota[] = {sizes.train / 2, sizes.val / 2, sizes.test / 2};

  for (CropLabel label : {CropLabel::person, CropLabel::non_person}) {
    const std::vector<int64_t>& pool = label == CropLabel::person ? person : nonperson;
    size_t cursor = 0;
    for (int s = 0; s < 3; ++s) {
      for (int64_t k = 0; k < quota[s]; ++k) {
        const int64_t image_id = pool[cursor++];
        const ImageInfo* info = coco.find_image(image_id);
        const std::vector<size_t> anns = crop_annotations(coco, image_id, label);
        int64_t index = 0;
        for (size_t idx : anns) {
          const AnnotationRecord& ann = coco.annotations[idx];
          CropSpec crop;
          crop.image_id = image_id;
          crop.annotation_id = ann.id;
          crop.padded_box = compute_padded_box(ann.bbox, padding_fraction, info->width, info->height);
          crop.label = label;
          crop.split = split_order[s];
          crop.source_file = info->file_name;
          crop.file = fmt::format("{}/{}/{}_{:02}.png", to_string(crop.split), to_string(label), image_id, index++);
          manifest.crops.push_back(std::move(crop));
        }
      }
    }
  }

  // Emit splits in train/val/test order (classes interleaved above were
  // grouped per label; regroup by split for a stable, readable layout).
  std::stable_sort(manifest.crops.begin(), manifest.crops.end(), [](const CropSpec& a, const CropSpec& b) {
    return static_cast<int>(a.split) < static_cast<int>(b.split);
  });
  return manifest;
}

ExtractionSummary extract_crops(const DatasetManifest& manifest, const std::filesystem::path& image_dir,
                                const std::filesystem::path& out_dir) {
  ExtractionSummary summary;
  // Crops cluster by source image, so a one-slot cache avoids most reloads.
  int64_t cached_id = -1;
  std::string cached_file;
  Tensor cached;

  for (const CropSpec& crop : manifest.crops) {
    try {
      if (crop.image_id != cached_id || crop.source_file != cached_file) {
        cached = load_image(image_dir / crop.source_file);
        cached_id = crop.image_id;
        cached_file = crop.source_file;
      }
      const int64_t ih = cached.dim(1);
      const int64_t iw = cached.dim(2);
      const PixelBox px = pixel_box(crop.padded_box, iw, ih);
      Tensor out({3, px.h, px.w});
      for (int64_t c = 0; c < 3; ++c) {
        for (int64_t y = 0; y < px.h; ++y) {
          const double* src = cached.data() + (c * ih + px.y + y) * iw + px.x;
          double* dst = out.data() + (c * px.h + y) * px.w;
          std::copy(src, src + px.w, dst);
        }
      }
      const std::filesystem::path dest = out_dir / crop.file;
      std::filesystem::create_directories(dest.parent_path());
      save_png(dest, out);
      ++summary.written;
    } catch (const std::exception& e) {
      cached_id = -1;  // never trust the cache after a failure
      summary.failures.push_back(ExtractionFailure{crop.file, e.what()});
    }
  }
  return summary;
}

std::vector<CropSpec> select_attack_subset(const DatasetManifest& manifest, int64_t n, uint64_t seed,
                                           AttackSubsetSource source) {
  if (n < 0) throw UserError("attack subset size must be non-negative");
  std::vector<CropSpec> pool;
  for (const CropSpec& c : manifest.crops) {
    const bool from_train = c.split == SplitId::train;
    if (source == AttackSubsetSource::held_out ? !from_train : from_train) pool.push_back(c);
  }
  if (n > static_cast<int64_t>(pool.size())) {
    throw UserError(fmt::format("attack subset of {} requested but only {} crops available outside the excluded split",
                                n, pool.size()));
  }
  Rng rng(seed);
  rng.shuffle(pool);
  pool.resize(static_cast<size_t>(n));
  return pool;
}

std::vector<CropSpec> split_crops(const DatasetManifest& manifest, SplitId split) {
  std::vector<CropSpec> out;
  for (const CropSpec& c : manifest.crops) {
    if (c.split == split) out.push_back(c);
  }
  return out;
}

LabeledImages load_crops(const std::vector<CropSpec>& crops, const std::filesystem::path& dataset_dir,
                         int64_t image_size) {
  LabeledImages out;
  out.images.reserve(crops.size());
  out.labels.reserve(crops.size());
  for (const CropSpec& c : crops) {
    Tensor img = load_image(dataset_dir / c.file);
    out.images.push_back(resize_bilinear(img, image_size, image_size));
    out.labels.push_back(c.label == CropLabel::person ? 1 : 0);
  }
  return out;
}

}  // namespace patchforge
