/* Copyright 2026 The LGUNet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "data.hpp"
#include "error.hpp"
#include "fusion.hpp"
#include "loss.hpp"
#include "support.hpp"

using namespace lgunet;
using namespace lgunet::testing;

namespace {

FusedConfig tiny_config() {
  FusedConfig cfg;
  cfg.global.base_channels = 2;
  cfg.global.depth = 1;
  cfg.global.height = 8;
  cfg.global.width = 8;
  cfg.local.base_channels = 3;
  cfg.local.depth = 1;
  cfg.local.height = 8;
  cfg.local.width = 8;
  cfg.head_width = 4;
  cfg.frame = {16, 24};
  return cfg;
}

double inner(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

// Mass center of channel 0, in output index coordinates.
std::pair<double, double> mass_center(const Tensor& t) {
  double m = 0.0;
  double my = 0.0;
  double mx = 0.0;
  for (int y = 0; y < t.h(); ++y)
    for (int x = 0; x < t.w(); ++x) {
      const double v = t.at(0, 0, y, x);
      m += v;
      my += v * y;
      mx += v * x;
    }
  return {my / m, mx / m};
}

}  // namespace

TEST_CASE("window to global mapping examples") {
  const FrameSize frame{2816, 3328};
  PatchWindow w{0, 0, 0, 0, 256, frame};
  GlobalCropRect r = map_window_to_global(w, {640, 640});
  CHECK(r.top == 0.0);
  CHECK(r.left == 0.0);
  CHECK(r.bottom == doctest::Approx(256.0 * 640.0 / 2816.0));
  CHECK(r.bottom == doctest::Approx(58.1818).epsilon(1e-5));
  CHECK(r.right == doctest::Approx(49.2308).epsilon(1e-5));

  PatchWindow last{10, 12, 2560, 3072, 256, frame};
  r = map_window_to_global(last, {640, 640});
  CHECK(r.bottom == 640.0);
  CHECK(r.right == 640.0);

  PatchWindow full{0, 0, 0, 0, 512, {512, 512}};
  r = map_window_to_global(full, {640, 640});
  CHECK(r.top == 0.0);
  CHECK(r.left == 0.0);
  CHECK(r.bottom == 640.0);
  CHECK(r.right == 640.0);
}

TEST_CASE("adjacent global rects share edges exactly") {
  for (const Geometry& g : {Geometry::full(), Geometry::desk()}) {
    const auto grid = patch_grid(g.frame, g.patch);
    const int cols = g.grid_cols();
    for (const PatchWindow& w : grid) {
      const GlobalCropRect r = map_window_to_global(w, g.global);
      CHECK(r.top >= 0.0);
      CHECK(r.bottom <= g.global.height);
      CHECK(r.top < r.bottom);
      if (w.col + 1 < cols) {
        const GlobalCropRect right = map_window_to_global(grid[w.row * cols + w.col + 1], g.global);
        CHECK(std::abs(right.left - r.right) < 1e-9);
        CHECK(right.top == r.top);
      }
      if (w.row + 1 < g.grid_rows()) {
        const GlobalCropRect below = map_window_to_global(grid[(w.row + 1) * cols + w.col], g.global);
        CHECK(std::abs(below.top - r.bottom) < 1e-9);
      }
    }
  }
}

TEST_CASE("crop of a constant map is constant") {
  const Tensor f(1, 3, 20, 20, 0.7);
  const Tensor out = crop_and_rescale(f, {2.3, 4.1, 9.7, 15.2}, 16, 16);
  CHECK(out.c() == 3);
  for (double v : out.values()) CHECK(v == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("full-frame crop at the same size is the identity") {
  const Tensor f = random_tensor(1, 2, 12, 10, 4);
  const Tensor out = crop_and_rescale(f, {0, 0, 12, 10}, 12, 10);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(out.data()[i] == f.data()[i]);
}

TEST_CASE("impulse lands at its mapped coordinate") {
  const GlobalCropRect rect{10.0, 20.0, 26.0, 44.0};  // 16 x 24 source cells
  const int out_h = 32;
  const int out_w = 32;
  for (int gy = 12; gy < 24; gy += 3) {
    for (int gx = 23; gx < 41; gx += 4) {
      Tensor f(1, 1, 40, 60, 0.0);
      f.at(0, 0, gy, gx) = 1.0;
      const Tensor out = crop_and_rescale(f, rect, out_h, out_w);
      // Cell center gy + 0.5 maps to output coordinate (gy + 0.5 - top) * out / h - 0.5.
      const double ey = (gy + 0.5 - rect.top) * out_h / rect.height() - 0.5;
      const double ex = (gx + 0.5 - rect.left) * out_w / rect.width() - 0.5;
      const auto [cy, cx] = mass_center(out);
      CHECK(std::abs(cy - ey) < 1.0);
      CHECK(std::abs(cx - ex) < 1.0);
    }
  }
}

TEST_CASE("degenerate and out-of-bounds rects are rejected") {
  const Tensor f(1, 1, 10, 10, 1.0);
  CHECK_THROWS_AS(crop_and_rescale(f, {2.0, 2.0, 2.5, 2.5}, 4, 4), Error);
  CHECK_THROWS_AS(crop_and_rescale(f, {0.0, 0.0, 11.0, 5.0}, 4, 4), Error);
  CHECK_THROWS_AS(crop_and_rescale(f, {-1.0, 0.0, 5.0, 5.0}, 4, 4), Error);
}

TEST_CASE("crop backward is the adjoint of crop") {
  const Tensor f = random_tensor(1, 2, 9, 13, 8);
  const GlobalCropRect rect{1.3, 2.2, 7.9, 11.4};
  const Tensor g = random_tensor(1, 2, 10, 7, 9);
  const Tensor y = crop_and_rescale(f, rect, 10, 7);
  Tensor df(1, 2, 9, 13, 0.0);
  crop_and_rescale_backward(g, rect, df);
  CHECK(inner(y, g) == doctest::Approx(inner(f, df)).epsilon(1e-12));
}

TEST_CASE("head sees local plus global channels and preserves size") {
  FusedConfig cfg = tiny_config();
  FusedModel model(cfg);
  model.init(3);
  CHECK(model.head().conv1().in_channels() == cfg.local.base_channels + cfg.global.base_channels);
  FusedConfig full;
  full.global.base_channels = 32;
  full.local.base_channels = 32;
  CHECK(FusionHead("h", full.local.base_channels + full.global.base_channels, 64).conv1().in_channels() == 64);

  const Tensor g = random_tensor(1, 3, 8, 8, 1);
  const Tensor p = random_tensor(1, 3, 8, 8, 2);
  const FusedOutput out = fused_forward(model, g, p, {1, 2, 8, 16, 8, cfg.frame});
  CHECK(out.local.probabilities.h() == 8);
  CHECK(out.local.probabilities.w() == 8);
  CHECK(out.global.probabilities.h() == 8);
}

TEST_CASE("cutting the global branch makes the output a function of the patch alone") {
  FusedConfig cfg = tiny_config();
  FusedModel model(cfg);
  model.init(5);
  Tensor& w = model.head().conv1().weight().value;
  for (int o = 0; o < w.n(); ++o)
    for (int i = cfg.local.base_channels; i < w.c(); ++i)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) w.at(o, i, y, x) = 0.0;
  const Tensor p = random_tensor(1, 3, 8, 8, 2);
  const PatchWindow win{0, 1, 0, 8, 8, cfg.frame};
  const Tensor a = fused_forward(model, random_tensor(1, 3, 8, 8, 10), p, win).local.logits;
  const Tensor b = fused_forward(model, random_tensor(1, 3, 8, 8, 11), p, win).local.logits;
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("predict_windows matches the evaluation forward") {
  FusedConfig cfg = tiny_config();
  FusedModel model(cfg);
  model.init(6);
  const Tensor g = random_tensor(1, 3, 8, 8, 1);
  const Tensor p = random_tensor(3, 3, 8, 8, 2);
  const auto grid = patch_grid(cfg.frame, 8);
  std::vector<FusedItem> items{{0, grid[0]}, {0, grid[4]}, {0, grid[5]}};
  const FusedPass pass = model.forward(g, p, items, FusedModes::all(Mode::kEval));
  const Tensor gf = model.global_net().penultimate_features(g, Mode::kEval);
  const Tensor logits = model.predict_windows(gf, p, items);
  for (std::size_t i = 0; i < logits.size(); ++i) CHECK(logits.data()[i] == pass.logits.data()[i]);
}

TEST_CASE("fused gradients reach the global stream through the fusion path") {
  FusedConfig cfg = tiny_config();
  FusedModel model(cfg);
  model.init(11);
  jitter(model.parameters(), model.buffers(), 14);
  const Tensor g = random_tensor(2, 3, 8, 8, 1);
  const Tensor p = random_tensor(3, 3, 8, 8, 2);
  const auto grid = patch_grid(cfg.frame, 8);
  std::vector<FusedItem> items{{0, grid[1]}, {1, grid[3]}, {1, grid[5]}};
  const auto gl = random_labels(2 * 64, 0.3, 3);
  const auto ll = random_labels(3 * 64, 0.3, 4);
  const LossWeights w{1.0, 0.7, 1e-3};
  const double gamma = 1.5;
  const FusedModes modes = FusedModes::all(Mode::kEval);
  auto params = model.parameters();

  auto loss = [&] {
    const FusedPass pass = model.forward(g, p, items, modes);
    Tensor dg;
    Tensor dl;
    return w.lambda1 * batch_weighted_ce(pass.global_logits, gl, gamma, dg) +
           w.lambda2 * batch_weighted_ce(pass.logits, ll, gamma, dl) + w.lambda3 * l2_penalty(params);
  };

  for (Parameter* q : params) q->grad.zero();
  const FusedPass pass = model.forward(g, p, items, modes);
  Tensor dg;
  Tensor dl;
  batch_weighted_ce(pass.global_logits, gl, gamma, dg, w.lambda1);
  batch_weighted_ce(pass.logits, ll, gamma, dl, w.lambda2);
  model.backward(&dg, dl, true);
  add_l2_gradient(params, w.lambda3);

  std::mt19937_64 pick(12);
  for (Parameter* q : params) {
    const std::size_t i = pick() % q->value.size();
    const double numeric = central_difference(q->value.data()[i], loss);
    INFO(q->name << " analytic " << q->grad.data()[i] << " numeric " << numeric);
    CHECK(gradients_agree(q->grad.data()[i], numeric, 1e-4));
  }

  // The global classifier is only reached by L_global; drop it and the
  // global encoder still gets a fusion-path gradient.
  for (Parameter* q : params) q->grad.zero();
  model.forward(g, p, items, modes);
  model.backward(nullptr, dl, true);
  double norm = 0.0;
  for (Parameter* q : model.global_net().parameters()) norm += q->grad.squared_norm();
  CHECK(norm > 0.0);
  CHECK(model.global_net().classifier().weight().grad.squared_norm() == 0.0);
}

TEST_CASE("head-only backward leaves stream gradients untouched") {
  FusedConfig cfg = tiny_config();
  FusedModel model(cfg);
  model.init(13);
  const Tensor g = random_tensor(1, 3, 8, 8, 1);
  const Tensor p = random_tensor(2, 3, 8, 8, 2);
  const auto grid = patch_grid(cfg.frame, 8);
  std::vector<FusedItem> items{{0, grid[0]}, {0, grid[2]}};
  for (Parameter* q : model.parameters()) q->grad.zero();
  const FusedPass pass = model.forward(g, p, items, {Mode::kEval, Mode::kEval, Mode::kTrain});
  Tensor dl;
  batch_weighted_ce(pass.logits, random_labels(128, 0.2, 5), 1.0, dl);
  model.backward(nullptr, dl, false);
  for (Parameter* q : model.global_net().parameters()) CHECK(q->grad.squared_norm() == 0.0);
  for (Parameter* q : model.local_net().parameters()) CHECK(q->grad.squared_norm() == 0.0);
  double head = 0.0;
  for (Parameter* q : model.head_parameters()) head += q->grad.squared_norm();
  CHECK(head > 0.0);
}
