// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Microbenchmarks for the hot paths: the toy backbone forward pass, the
// crease displacement field plus warp, and the patch regularizers.

#include <benchmark/benchmark.h>

#include "patchforge/autodiff.hpp"
#include "patchforge/crease.hpp"
#include "patchforge/losses.hpp"
#include "patchforge/rng.hpp"
#include "patchforge/tensor.hpp"
#include "patchforge/vit.hpp"

namespace pf = patchforge;

namespace {

pf::Tensor random_patch(int64_t side, uint64_t seed) {
  pf::Rng rng(seed);
  pf::Tensor t({3, side, side});
  for (double& v : t.storage()) v = rng.uniform01();
  return t;
}

void bm_toy_vit_forward(benchmark::State& state) {
  pf::VitConfig cfg;
  cfg.image_size = 64;
  cfg.patch_size = 8;
  cfg.hidden_dim = 32;
  cfg.num_heads = 4;
  cfg.num_layers = 2;
  cfg.mlp_dim = 128;
  pf::VitModel model = pf::VitModel::random_init(cfg, 2);

  const int64_t batch = state.range(0);
  pf::Rng rng(3);
  pf::Tensor images({batch, 3, 64, 64});
  for (double& v : images.storage()) v = rng.uniform01();

  for (auto _ : state) {
    pf::NoGradGuard guard;
    pf::Var logits = model.forward(pf::Var(images));
    benchmark::DoNotOptimize(logits.value().data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}

void bm_crease_field_and_warp(benchmark::State& state) {
  const int64_t side = state.range(0);
  pf::Tensor patch = random_patch(side, 5);
  pf::CreaseSpec spec;
  spec.vantage_u = 0.3;
  spec.vantage_v = 0.6;
  spec.direction_deg = 40.0;
  spec.strength = 0.02;
  spec.max_offset_px = 0.10 * static_cast<double>(side);

  for (auto _ : state) {
    pf::NoGradGuard guard;
    pf::Tensor field = pf::crease_field(spec, side, side);
    pf::Var warped = pf::warp_by_field(pf::Var(patch), field);
    benchmark::DoNotOptimize(warped.value().data());
  }
  state.SetItemsProcessed(state.iterations());
}

void bm_tv_loss_backward(benchmark::State& state) {
  const int64_t side = state.range(0);
  pf::Tensor patch = random_patch(side, 9);

  for (auto _ : state) {
    pf::Var leaf(patch, true, "patch");
    pf::Var loss = pf::tv_loss(leaf);
    pf::backward(loss);
    benchmark::DoNotOptimize(leaf.grad().data());
  }
  state.SetItemsProcessed(state.iterations());
}

BENCHMARK(bm_toy_vit_forward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_crease_field_and_warp)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_tv_loss_backward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
