// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "patchforge/adapter.hpp"
#include "patchforge/augment.hpp"
#include "patchforge/errors.hpp"
#include "patchforge/freeze.hpp"
#include "patchforge/metrics.hpp"
#include "patchforge/rng.hpp"
#include "patchforge/trainer.hpp"
#include "test_util.hpp"

using namespace patchforge;

namespace {

constexpr int64_t kSide = 32;

ClassifierModel mini_model(uint64_t seed) {
  VitConfig cfg;
  cfg.image_size = kSide;
  cfg.patch_size = 8;
  cfg.hidden_dim = 16;
  cfg.num_heads = 2;
  cfg.num_layers = 2;
  cfg.mlp_dim = 32;
  return ClassifierModel(VitModel::random_init(cfg, seed), "mini", Normalization::half());
}

/// Linearly separable two-class set: persons are red-dominant, non-persons
/// blue-dominant, plus mild noise. A channel cue survives flips and the
/// brightness/contrast augmentation, so the trainer itself is what is
/// under test, not the backbone's capacity.
LabeledImages separable_set(int64_t n, uint64_t seed) {
  LabeledImages out;
  Rng rng(seed);
  for (int64_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    Tensor img({3, kSide, kSide});
    for (int64_t c = 0; c < 3; ++c) {
      const bool hot = (label == 1 && c == 0) || (label == 0 && c == 2);
      for (int64_t y = 0; y < kSide; ++y) {
        for (int64_t x = 0; x < kSide; ++x) {
          img.at({c, y, x}) = (hot ? 0.8 : 0.2) + rng.uniform(-0.05, 0.05);
        }
      }
    }
    out.images.push_back(std::move(img));
    out.labels.push_back(label);
  }
  return out;
}

}  // namespace

TEST_CASE("augment with everything disabled is the identity") {
  const Tensor batch = testutil::random_tensor({4, 3, 8, 8}, 3);
  AugConfig cfg;
  cfg.hflip_prob = 0.0;
  cfg.brightness_jitter = 0.0;
  cfg.contrast_jitter = 0.0;
  Rng rng(1);
  const Tensor out = augment_batch(batch, cfg, rng);
  for (size_t i = 0; i < batch.storage().size(); ++i) {
    CHECK(out.storage()[i] == doctest::Approx(batch.storage()[i]).epsilon(1e-12));
  }
}

TEST_CASE("augment with certain flip mirrors every row") {
  const Tensor batch = testutil::random_tensor({2, 3, 6, 6}, 5);
  AugConfig cfg;
  cfg.hflip_prob = 1.0;
  cfg.brightness_jitter = 0.0;
  cfg.contrast_jitter = 0.0;
  Rng rng(1);
  const Tensor out = augment_batch(batch, cfg, rng);
  for (int64_t b = 0; b < 2; ++b) {
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t y = 0; y < 6; ++y) {
        for (int64_t x = 0; x < 6; ++x) {
          CHECK(out.at({b, c, y, x}) == doctest::Approx(batch.at({b, c, y, 5 - x})).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("flip rate tracks the configured probability") {
  AugConfig cfg;
  cfg.hflip_prob = 0.5;
  cfg.brightness_jitter = 0.0;
  cfg.contrast_jitter = 0.0;
  Rng rng(11);
  // An asymmetric probe makes a flip detectable from one pixel pair.
  Tensor batch({1, 3, 2, 2});
  batch.at({0, 0, 0, 0}) = 1.0;
  int flips = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const Tensor out = augment_batch(batch, cfg, rng);
    if (out.at({0, 0, 0, 1}) == doctest::Approx(1.0)) ++flips;
  }
  CHECK(std::abs(static_cast<double>(flips) / n - 0.5) < 0.03);
}

TEST_CASE("augment keeps values inside [0,1] and checks its inputs") {
  Tensor batch = Tensor::full({2, 3, 4, 4}, 0.97);
  AugConfig cfg;
  cfg.hflip_prob = 0.0;
  cfg.brightness_jitter = 0.1;
  cfg.contrast_jitter = 0.2;
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    const Tensor out = augment_batch(batch, cfg, rng);
    for (double v : out.storage()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK_THROWS_AS(augment_batch(Tensor::full({3, 4, 4}, 0.5), cfg, rng), Error);
  AugConfig bad;
  bad.hflip_prob = 1.5;
  CHECK_THROWS_AS(augment_batch(batch, bad, rng), UserError);
}

TEST_CASE("augment stream position is outcome independent") {
  // Same seed, different flip outcomes on image 0 must not desync image 1.
  AugConfig certain;
  certain.hflip_prob = 1.0;
  AugConfig never;
  never.hflip_prob = 0.0;
  const Tensor batch = testutil::random_tensor({2, 3, 4, 4}, 17);
  Rng r1(9);
  Rng r2(9);
  const Tensor a = augment_batch(batch, certain, r1);
  const Tensor b = augment_batch(batch, never, r2);
  // After both calls the streams must agree again.
  CHECK(r1.next_u64() == r2.next_u64());
  // And the second image differs only by the flip.
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t y = 0; y < 4; ++y) {
      for (int64_t x = 0; x < 4; ++x) {
        CHECK(a.at({1, c, y, x}) == doctest::Approx(b.at({1, c, y, 3 - x})).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("confusion counts and derived metrics match hand arithmetic") {
  const std::vector<int> labels{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  const std::vector<int> preds{1, 1, 1, 0, 0, 0, 0, 0, 1, 1};
  const Counts c = count_confusion(labels, preds);
  CHECK(c.tp == 3);
  CHECK(c.fn == 1);
  CHECK(c.fp == 2);
  CHECK(c.tn == 4);
  CHECK(c.total() == 10);

  const MetricsReport m = metrics_from_counts(c);
  CHECK(m.accuracy == doctest::Approx(0.7));
  CHECK(m.precision == doctest::Approx(3.0 / 5.0));
  CHECK(m.recall == doctest::Approx(3.0 / 4.0));
  CHECK(m.f1 == doctest::Approx(2.0 * 0.6 * 0.75 / (0.6 + 0.75)));

  CHECK_THROWS_AS(count_confusion({}, {}), Error);
  CHECK_THROWS_AS(count_confusion({1, 0}, {1}), Error);
}

TEST_CASE("degenerate metric denominators yield zero, not NaN") {
  // No positive predictions: precision 0; no positive labels: recall 0.
  const MetricsReport none_predicted = evaluate_metrics({1, 1, 0}, {0, 0, 0});
  CHECK(none_predicted.precision == 0.0);
  CHECK(none_predicted.f1 == 0.0);
  const MetricsReport none_positive = evaluate_metrics({0, 0, 0}, {0, 1, 0});
  CHECK(none_positive.recall == 0.0);
  CHECK(none_positive.f1 == 0.0);
}

TEST_CASE("the F1 of precision 91.21% and recall 68.58% is about 78.3%") {
  Counts c;
  // Construct counts hitting the stated precision/recall closely.
  c.tp = 6858;
  c.fn = 10000 - 6858;
  c.fp = static_cast<int64_t>(std::llround(6858.0 * (1.0 - 0.9121) / 0.9121));
  c.tn = 5000;
  const MetricsReport m = metrics_from_counts(c);
  CHECK(m.precision == doctest::Approx(0.9121).epsilon(1e-3));
  CHECK(m.recall == doctest::Approx(0.6858).epsilon(1e-6));
  const double f1 = 2.0 * 0.9121 * 0.6858 / (0.9121 + 0.6858);
  CHECK(m.f1 == doctest::Approx(f1).epsilon(1e-3));
  CHECK(std::abs(f1 - 0.7820) < 0.0015);
}

TEST_CASE("training separates an easy two-class problem") {
  ClassifierModel model = mini_model(2);
  const LabeledImages train_set = separable_set(48, 100);
  const LabeledImages val_set = separable_set(16, 200);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.learning_rate = 5e-3;
  cfg.epochs = 10;
  cfg.seed = 2;
  const TrainResult result = train(model, train_set, val_set, cfg);
  REQUIRE(result.epochs.size() == 10);
  CHECK(result.best_epoch >= 1);
  CHECK(result.best_val_f1 >= 0.95);
  const MetricsReport final_val = evaluate_split(model, val_set, 8);
  CHECK(final_val.accuracy >= 0.95);
  CHECK(!result.log_lines.empty());
  CHECK(result.log_lines[0].rfind("epoch=1 split=train metric=loss", 0) == 0);
}

TEST_CASE("zero learning rate leaves the weights untouched") {
  ClassifierModel model = mini_model(4);
  const uint64_t before = model.model().weights_hash();
  const LabeledImages train_set = separable_set(16, 300);
  const LabeledImages val_set = separable_set(8, 400);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  const TrainResult result = train(model, train_set, val_set, cfg);
  CHECK(model.model().weights_hash() == before);
  for (const EpochStats& e : result.epochs) CHECK(std::isfinite(e.train_loss));
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  const LabeledImages train_set = separable_set(24, 500);
  const LabeledImages val_set = separable_set(8, 600);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 3;
  cfg.seed = 9;

  ClassifierModel a = mini_model(6);
  ClassifierModel b = mini_model(6);
  const TrainResult ra = train(a, train_set, val_set, cfg);
  const TrainResult rb = train(b, train_set, val_set, cfg);
  CHECK(a.model().weights_hash() == b.model().weights_hash());
  REQUIRE(ra.log_lines.size() == rb.log_lines.size());
  for (size_t i = 0; i < ra.log_lines.size(); ++i) CHECK(ra.log_lines[i] == rb.log_lines[i]);

  TrainConfig other = cfg;
  other.seed = 10;
  ClassifierModel c = mini_model(6);
  train(c, train_set, val_set, other);
  CHECK(c.model().weights_hash() != a.model().weights_hash());
}

TEST_CASE("frozen parameters stay bit-identical through training") {
  ClassifierModel model = mini_model(8);
  const FreezePlan plan = FreezePlan::standard(0);  // embeddings + layer 0
  apply_freeze_plan(model.model(), plan);

  std::vector<std::pair<std::string, Tensor>> frozen_before;
  for (const auto& [name, var] : model.model().params()) {
    if (!var.requires_grad()) frozen_before.emplace_back(name, var.value().clone());
  }
  REQUIRE(!frozen_before.empty());
  const Tensor head_before = model.model().param("head.weight").value().clone();

  const LabeledImages train_set = separable_set(16, 700);
  const LabeledImages val_set = separable_set(8, 800);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 2;
  train(model, train_set, val_set, cfg);

  for (const auto& [name, before] : frozen_before) {
    const Tensor& after = model.model().param(name).value();
    for (size_t i = 0; i < before.storage().size(); ++i) {
      REQUIRE_MESSAGE(after.storage()[i] == before.storage()[i], "param ", name, " moved");
    }
  }
  bool head_changed = false;
  const Tensor& head_after = model.model().param("head.weight").value();
  for (size_t i = 0; i < head_before.storage().size(); ++i) {
    head_changed |= (head_after.storage()[i] != head_before.storage()[i]);
  }
  CHECK(head_changed);
}

TEST_CASE("training rejects empty inputs and bad config") {
  ClassifierModel model = mini_model(10);
  const LabeledImages empty;
  const LabeledImages ok = separable_set(8, 900);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(model, empty, ok, cfg), UserError);
  CHECK_THROWS_AS(train(model, ok, empty, cfg), UserError);
  TrainConfig bad = cfg;
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(train(model, ok, ok, bad), UserError);
  TrainConfig bad_batch = cfg;
  bad_batch.batch_size = 0;
  CHECK_THROWS_AS(train(model, ok, ok, bad_batch), UserError);
}

TEST_CASE("predict returns one thresholded label per image") {
  ClassifierModel model = mini_model(12);
  const LabeledImages set = separable_set(6, 1000);
  const std::vector<int> preds = predict(model, set, 4);
  REQUIRE(preds.size() == 6);
  for (int p : preds) CHECK((p == 0 || p == 1));
}
