// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/data.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "patchforge/errors.hpp"
#include "patchforge/image_io.hpp"
#include "patchforge/rng.hpp"
#include "test_util.hpp"

using namespace patchforge;

namespace {

/// Synthetic annotation set with a known composition: person counts per
/// image follow `person_counts`, non-person object boxes fill the rest.
struct Fixture {
  nlohmann::json doc;
  std::vector<int64_t> person_counts;  // indexed by image id - 1

  static Fixture make(const std::vector<int64_t>& person_counts, int64_t w = 96, int64_t h = 80) {
    Fixture f;
    f.person_counts = person_counts;
    nlohmann::json images = nlohmann::json::array();
    nlohmann::json annotations = nlohmann::json::array();
    int64_t ann_id = 1;
    Rng rng(99);
    for (size_t i = 0; i < person_counts.size(); ++i) {
      const int64_t image_id = static_cast<int64_t>(i) + 1;
      images.push_back({{"id", image_id},
                        {"file_name", "img_" + std::to_string(image_id) + ".png"},
                        {"width", w},
                        {"height", h}});
      for (int64_t k = 0; k < person_counts[i]; ++k) {
        const double bw = rng.uniform(10.0, 30.0);
        const double bh = rng.uniform(12.0, 36.0);
        annotations.push_back({{"id", ann_id++},
                               {"image_id", image_id},
                               {"category_id", 1},
                               {"bbox", {rng.uniform(0.0, w - bw), rng.uniform(0.0, h - bh), bw, bh}}});
      }
      // One non-person object per image so non-person images have a box to crop.
      annotations.push_back({{"id", ann_id++},
                             {"image_id", image_id},
                             {"category_id", 18},
                             {"bbox", {rng.uniform(0.0, w - 12.0), rng.uniform(0.0, h - 12.0), 12.0, 12.0}}});
    }
    f.doc = {{"images", images},
             {"annotations", annotations},
             {"categories",
              {{{"id", 1}, {"name", "person"}}, {{"id", 3}, {"name", "car"}}, {{"id", 18}, {"name", "dog"}}}}};
    return f;
  }
};

/// The predicate the partition must agree with, stated as directly as
/// possible: count annotations named "person" per image.
void check_partition_against_brute_force(const CocoData& coco, const ClassPartition& got) {
  std::set<int64_t> person_expected;
  std::set<int64_t> nonperson_expected;
  for (const ImageInfo& im : coco.images) {
    int64_t persons = 0;
    for (const AnnotationRecord& a : coco.annotations) {
      if (a.image_id == im.id && a.category == "person") ++persons;
    }
    if (persons >= 1 && persons <= 3) person_expected.insert(im.id);
    if (persons == 0) nonperson_expected.insert(im.id);
  }
  CHECK(std::set<int64_t>(got.person_images.begin(), got.person_images.end()) == person_expected);
  CHECK(std::set<int64_t>(got.nonperson_images.begin(), got.nonperson_images.end()) == nonperson_expected);
}

}  // namespace

TEST_CASE("parse_coco reads a well-formed document") {
  const Fixture f = Fixture::make({1, 0, 2});
  const CocoData coco = parse_coco(f.doc);
  CHECK(coco.images.size() == 3);
  CHECK(coco.annotations.size() == 6);  // 3 persons + 3 objects
  CHECK(coco.rejected.empty());
  REQUIRE(coco.find_image(2) != nullptr);
  CHECK(coco.find_image(2)->file_name == "img_2.png");
  CHECK(coco.find_image(99) == nullptr);
  CHECK(coco.annotations_by_image.at(3).size() == 3);
}

TEST_CASE("parse_coco rejects malformed records but keeps the rest") {
  nlohmann::json doc = Fixture::make({1, 1}).doc;
  doc["images"].push_back({{"id", 50}, {"file_name", "x.png"}});              // missing size
  doc["images"].push_back({{"id", 51}, {"file_name", "y.png"}, {"width", 0}, {"height", 10}});
  doc["annotations"].push_back({{"id", 900}, {"image_id", 1}});               // missing bbox
  doc["annotations"].push_back(
      {{"id", 901}, {"image_id", 1}, {"category_id", 7777}, {"bbox", {1.0, 1.0, 5.0, 5.0}}});
  doc["annotations"].push_back(
      {{"id", 902}, {"image_id", 4040}, {"category_id", 1}, {"bbox", {1.0, 1.0, 5.0, 5.0}}});
  doc["annotations"].push_back(
      {{"id", 903}, {"image_id", 1}, {"category_id", 1}, {"bbox", {1.0, 1.0, 0.0, 5.0}}});

  const CocoData coco = parse_coco(doc);
  CHECK(coco.images.size() == 2);
  CHECK(coco.annotations.size() == 4);
  CHECK(coco.rejected.size() == 6);
}

TEST_CASE("parse_coco_file reports unreadable and invalid inputs") {
  CHECK_THROWS_AS(parse_coco_file("/does/not/exist.json"), UserError);
  testutil::TempDir tmp("pf-data");
  const auto bad = tmp.path() / "bad.json";
  {
    std::ofstream out(bad);
    out << "{ not json";
  }
  CHECK_THROWS_AS(parse_coco_file(bad), UserError);
}

TEST_CASE("filter_annotations implements the 1-to-3-person predicate") {
  // Composition: person counts 0,1,2,3,4,5 plus several in-range repeats.
  const Fixture f = Fixture::make({0, 1, 2, 3, 4, 5, 1, 3, 0, 2});
  const CocoData coco = parse_coco(f.doc);
  const ClassPartition part = filter_annotations(coco);
  check_partition_against_brute_force(coco, part);
  CHECK(part.person_images.size() == 6);     // counts 1,2,3,1,3,2
  CHECK(part.nonperson_images.size() == 2);  // counts 0,0
  // 4 and 5 person images fall in neither pool.
}

TEST_CASE("compute_padded_box grows each side by the fraction and clips") {
  const BoxF box{10.0, 20.0, 40.0, 60.0};
  const BoxF padded = compute_padded_box(box, 0.15, 200, 200);
  CHECK(padded.x == doctest::Approx(10.0 - 3.0));
  CHECK(padded.y == doctest::Approx(20.0 - 4.5));
  CHECK(padded.w == doctest::Approx(46.0));
  CHECK(padded.h == doctest::Approx(69.0));

  // Clipped at the top-left corner.
  const BoxF clipped = compute_padded_box(BoxF{1.0, 0.0, 40.0, 60.0}, 0.15, 200, 200);
  CHECK(clipped.x == doctest::Approx(0.0));
  CHECK(clipped.y == doctest::Approx(0.0));
  CHECK(clipped.w == doctest::Approx(44.0));   // right edge 1+40+3 = 44
  CHECK(clipped.h == doctest::Approx(64.5));   // bottom edge 0+60+4.5

  // A box hanging past the border is clipped to its visible part first,
  // then grown, so the growth reflects what is actually in the frame.
  const BoxF right = compute_padded_box(BoxF{170.0, 150.0, 40.0, 60.0}, 0.15, 200, 200);
  CHECK(right.x == doctest::Approx(170.0 - 30.0 * 0.075));  // visible w = 30
  CHECK(right.y == doctest::Approx(150.0 - 50.0 * 0.075));  // visible h = 50
  CHECK(right.x + right.w == doctest::Approx(200.0));
  CHECK(right.y + right.h == doctest::Approx(200.0));
}

TEST_CASE("pixel_box rounds outward and clips") {
  const PixelBox px = pixel_box(BoxF{7.2, 15.5, 45.6, 69.0}, 200, 200);
  CHECK(px.x == 7);
  CHECK(px.y == 15);
  CHECK(px.w == 46);  // ceil(52.8) - 7
  CHECK(px.h == 70);  // ceil(84.5) - 15

  const PixelBox clipped = pixel_box(BoxF{195.5, 3.0, 10.0, 5.0}, 200, 200);
  CHECK(clipped.x == 195);
  CHECK(clipped.x + clipped.w <= 200);

  CHECK_THROWS_AS(pixel_box(BoxF{10.0, 10.0, 0.0, 5.0}, 200, 200), Error);
}

TEST_CASE("build_splits fills exact balanced sizes from disjoint pools") {
  // 14 person-eligible and 12 non-person images.
  std::vector<int64_t> counts;
  for (int i = 0; i < 14; ++i) counts.push_back(1 + (i % 3));
  for (int i = 0; i < 12; ++i) counts.push_back(0);
  const Fixture f = Fixture::make(counts);
  const CocoData coco = parse_coco(f.doc);
  const ClassPartition part = filter_annotations(coco);

  const SplitSizes sizes{12, 6, 6};
  const DatasetManifest manifest = build_splits(coco, part, sizes, 0.15, 2);

  // Exactly the requested number of images per split, half per class.
  std::set<int64_t> train_ids, val_ids, test_ids;
  for (const CropSpec& c : manifest.crops) {
    if (c.split == SplitId::train) train_ids.insert(c.image_id);
    if (c.split == SplitId::val) val_ids.insert(c.image_id);
    if (c.split == SplitId::test) test_ids.insert(c.image_id);
  }
  CHECK(train_ids.size() == 12);
  CHECK(val_ids.size() == 6);
  CHECK(test_ids.size() == 6);
  for (int64_t id : val_ids) {
    CHECK(train_ids.count(id) == 0);
    CHECK(test_ids.count(id) == 0);
  }
  for (int64_t id : test_ids) CHECK(train_ids.count(id) == 0);

  // Class balance inside each split.
  auto person_images_in = [&](const std::set<int64_t>& ids) {
    int64_t n = 0;
    for (int64_t id : ids) {
      for (int64_t p : part.person_images) {
        if (p == id) {
          ++n;
          break;
        }
      }
    }
    return n;
  };
  CHECK(person_images_in(train_ids) == 6);
  CHECK(person_images_in(val_ids) == 3);
  CHECK(person_images_in(test_ids) == 3);

  // Person images contribute person boxes only, at most 3 each.
  for (const CropSpec& c : manifest.crops) {
    if (c.label == CropLabel::person) {
      bool eligible = false;
      for (int64_t p : part.person_images) eligible |= (p == c.image_id);
      CHECK(eligible);
    }
  }

  // Same seed, same manifest; another seed, another draw.
  const DatasetManifest again = build_splits(coco, part, sizes, 0.15, 2);
  CHECK(again.to_json() == manifest.to_json());
  const DatasetManifest other = build_splits(coco, part, sizes, 0.15, 3);
  CHECK(other.to_json() != manifest.to_json());
}

TEST_CASE("build_splits rejects oversubscribed pools and odd sizes") {
  const Fixture f = Fixture::make({1, 1, 0, 0});
  const CocoData coco = parse_coco(f.doc);
  const ClassPartition part = filter_annotations(coco);
  CHECK_THROWS_AS(build_splits(coco, part, SplitSizes{4, 2, 0}, 0.15, 2), UserError);
  CHECK_THROWS_AS(build_splits(coco, part, SplitSizes{2, 1, 1}, 0.15, 2), UserError);
}

TEST_CASE("manifest survives a JSON round trip") {
  const Fixture f = Fixture::make({1, 2, 1, 0, 0, 0});
  const CocoData coco = parse_coco(f.doc);
  const DatasetManifest manifest = build_splits(coco, filter_annotations(coco), SplitSizes{2, 2, 2}, 0.15, 2);
  const DatasetManifest copy = DatasetManifest::from_json(manifest.to_json());
  CHECK(copy.to_json() == manifest.to_json());
  CHECK(copy.crops.size() == manifest.crops.size());
  CHECK(copy.padding_fraction == doctest::Approx(manifest.padding_fraction));
  CHECK(copy.seed == manifest.seed);

  testutil::TempDir tmp("pf-manifest");
  manifest.save(tmp.path() / "manifest.json");
  const DatasetManifest loaded = DatasetManifest::load(tmp.path() / "manifest.json");
  CHECK(loaded.to_json() == manifest.to_json());
  CHECK_THROWS_AS(DatasetManifest::load(tmp.path() / "missing.json"), UserError);
}

TEST_CASE("extract_crops cuts the padded pixel box exactly") {
  testutil::TempDir tmp("pf-extract");
  const auto image_dir = tmp.path() / "images";
  std::filesystem::create_directories(image_dir);

  const Fixture f = Fixture::make({1, 1, 1, 0, 0, 0});
  const CocoData coco = parse_coco(f.doc);

  // Render each source image with a position-dependent pattern so a crop
  // can only match its own rectangle.
  for (const ImageInfo& im : coco.images) {
    Tensor img({3, im.height, im.width});
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t y = 0; y < im.height; ++y) {
        for (int64_t x = 0; x < im.width; ++x) {
          img.at({c, y, x}) =
              std::fmod(0.05 * static_cast<double>(im.id) + 0.01 * static_cast<double>(c) +
                            0.003 * static_cast<double>(y) + 0.007 * static_cast<double>(x),
                        1.0);
        }
      }
    }
    save_png(image_dir / im.file_name, img);
  }

  const DatasetManifest manifest = build_splits(coco, filter_annotations(coco), SplitSizes{2, 2, 2}, 0.15, 2);
  const auto out_dir = tmp.path() / "dataset";
  const ExtractionSummary summary = extract_crops(manifest, image_dir, out_dir);
  CHECK(summary.failures.empty());
  CHECK(summary.written == static_cast<int64_t>(manifest.crops.size()));

  for (const CropSpec& c : manifest.crops) {
    const ImageInfo* im = coco.find_image(c.image_id);
    REQUIRE(im != nullptr);
    const Tensor source = load_image(image_dir / im->file_name);
    const Tensor crop = load_image(out_dir / c.file);
    const PixelBox px = pixel_box(c.padded_box, im->width, im->height);
    REQUIRE(crop.shape()[1] == px.h);
    REQUIRE(crop.shape()[2] == px.w);
    for (int64_t ch = 0; ch < 3; ++ch) {
      for (int64_t y = 0; y < px.h; ++y) {
        for (int64_t x = 0; x < px.w; ++x) {
          REQUIRE(crop.at({ch, y, x}) == doctest::Approx(source.at({ch, px.y + y, px.x + x})).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("extract_crops records missing sources and keeps going") {
  testutil::TempDir tmp("pf-extract-miss");
  const auto image_dir = tmp.path() / "images";
  std::filesystem::create_directories(image_dir);

  const Fixture f = Fixture::make({1, 1, 1, 0, 0, 0});
  const CocoData coco = parse_coco(f.doc);
  // Only write images 1 and 3; 2 and 4 are missing on disk.
  for (const ImageInfo& im : coco.images) {
    if (im.id % 2 == 1) save_png(image_dir / im.file_name, Tensor::full({3, im.height, im.width}, 0.5));
  }
  const DatasetManifest manifest = build_splits(coco, filter_annotations(coco), SplitSizes{2, 2, 2}, 0.15, 2);
  const ExtractionSummary summary = extract_crops(manifest, image_dir, tmp.path() / "dataset");
  CHECK(!summary.failures.empty());
  CHECK(summary.written + static_cast<int64_t>(summary.failures.size()) ==
        static_cast<int64_t>(manifest.crops.size()));
}

TEST_CASE("select_attack_subset honors source, size, and seed") {
  std::vector<int64_t> counts;
  for (int i = 0; i < 10; ++i) counts.push_back(1 + (i % 3));
  for (int i = 0; i < 10; ++i) counts.push_back(0);
  const Fixture f = Fixture::make(counts);
  const CocoData coco = parse_coco(f.doc);
  const DatasetManifest manifest = build_splits(coco, filter_annotations(coco), SplitSizes{10, 4, 4}, 0.15, 2);

  std::set<int64_t> train_ids;
  for (const CropSpec& c : manifest.crops) {
    if (c.split == SplitId::train) train_ids.insert(c.image_id);
  }

  const auto held = select_attack_subset(manifest, 5, 7);
  CHECK(held.size() == 5);
  for (const CropSpec& c : held) CHECK(train_ids.count(c.image_id) == 0);

  const auto from_train = select_attack_subset(manifest, 5, 7, AttackSubsetSource::train);
  for (const CropSpec& c : from_train) CHECK(train_ids.count(c.image_id) == 1);

  const auto held_again = select_attack_subset(manifest, 5, 7);
  for (size_t i = 0; i < held.size(); ++i) CHECK(held_again[i].annotation_id == held[i].annotation_id);

  CHECK_THROWS_AS(select_attack_subset(manifest, 100000, 7), UserError);
}

TEST_CASE("split_crops returns manifest order and load_crops resizes") {
  testutil::TempDir tmp("pf-load");
  const auto image_dir = tmp.path() / "images";
  std::filesystem::create_directories(image_dir);
  const Fixture f = Fixture::make({1, 1, 1, 0, 0, 0});
  const CocoData coco = parse_coco(f.doc);
  for (const ImageInfo& im : coco.images) {
    save_png(image_dir / im.file_name, Tensor::full({3, im.height, im.width}, 0.25));
  }
  const DatasetManifest manifest = build_splits(coco, filter_annotations(coco), SplitSizes{2, 2, 2}, 0.15, 2);
  const auto out_dir = tmp.path() / "dataset";
  extract_crops(manifest, image_dir, out_dir);

  const auto train = split_crops(manifest, SplitId::train);
  for (const CropSpec& c : train) CHECK(c.split == SplitId::train);

  const LabeledImages loaded = load_crops(train, out_dir, 32);
  REQUIRE(loaded.images.size() == train.size());
  REQUIRE(loaded.labels.size() == train.size());
  for (size_t i = 0; i < loaded.images.size(); ++i) {
    CHECK(loaded.images[i].shape() == Shape{3, 32, 32});
    CHECK(loaded.labels[i] == (train[i].label == CropLabel::person ? 1 : 0));
  }
  CHECK_THROWS(load_crops(train, tmp.path() / "nowhere", 32));
}
