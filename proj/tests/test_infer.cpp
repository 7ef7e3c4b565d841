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

#include <algorithm>
#include <random>

#include <opencv2/imgcodecs.hpp>

#include "error.hpp"
#include "data.hpp"
#include "infer.hpp"
#include "support.hpp"

using namespace lgunet;
using namespace lgunet::testing;

namespace {

ProbabilityMap random_map(FrameSize size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ProbabilityMap m;
  m.height = size.height;
  m.width = size.width;
  m.values.resize(static_cast<std::size_t>(size.height) * size.width);
  for (double& v : m.values) v = u(rng);
  return m;
}

std::vector<WindowPatch> constant_windows(FrameSize frame, int patch, double value) {
  std::vector<WindowPatch> out;
  for (const PatchWindow& w : patch_grid(frame, patch)) {
    out.push_back({w, std::vector<double>(static_cast<std::size_t>(patch) * patch, value)});
  }
  return out;
}

FusedConfig tiny_config() {
  FusedConfig cfg;
  cfg.global.base_channels = 4;
  cfg.global.depth = 2;
  cfg.global.height = 16;
  cfg.global.width = 16;
  cfg.local.base_channels = 4;
  cfg.local.depth = 2;
  cfg.local.height = 16;
  cfg.local.width = 16;
  cfg.head_width = 4;
  cfg.frame = {32, 48};
  return cfg;
}

}  // namespace

TEST_CASE("stitching 143 constant windows gives a constant frame") {
  const ProbabilityMap m = stitch(constant_windows({2816, 3328}, 256, 0.3), {2816, 3328}, 256);
  CHECK(m.height == 2816);
  CHECK(m.width == 3328);
  CHECK(std::all_of(m.values.begin(), m.values.end(), [](double v) { return v == 0.3; }));
}

TEST_CASE("stitch reports missing and duplicate cells") {
  const FrameSize frame{352, 416};
  auto windows = constant_windows(frame, 32, 0.5);
  auto missing = windows;
  missing.erase(missing.begin() + 3 * 13 + 7);
  CHECK_THROWS_WITH_AS(stitch(missing, frame, 32), doctest::Contains("(3, 7)"), Error);
  auto dup = windows;
  dup.push_back(dup[20]);
  CHECK_THROWS_WITH_AS(stitch(dup, frame, 32), doctest::Contains("(1, 7)"), Error);
  auto wrong = windows;
  wrong[0].values.pop_back();
  CHECK_THROWS_AS(stitch(wrong, frame, 32), Error);
}

TEST_CASE("stitch inverts split under any window order") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ProbabilityMap m = random_map({96, 160}, seed);
    auto windows = split(m, 32);
    CHECK(windows.size() == 15);
    std::shuffle(windows.begin(), windows.end(), std::mt19937_64(seed));
    const ProbabilityMap back = stitch(windows, m.size(), 32);
    CHECK(back.values == m.values);
  }
}

TEST_CASE("tile_predict batches and stitches every window") {
  const FrameSize frame{64, 96};
  int calls = 0;
  std::size_t seen = 0;
  const ProbabilityMap m = tile_predict(
      frame, 16,
      [&](std::span<const PatchWindow> ws) {
        ++calls;
        seen += ws.size();
        CHECK(ws.size() <= 5);
        std::vector<std::vector<double>> out;
        for (const PatchWindow& w : ws) {
          std::vector<double> v(256);
          for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 16; ++c) v[r * 16 + c] = ((w.top + r) * 96 + (w.left + c)) / 6144.0;
          out.push_back(std::move(v));
        }
        return out;
      },
      5);
  CHECK(seen == 24);
  CHECK(calls == 5);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 96; ++c) CHECK(m.at(r, c) == (r * 96 + c) / 6144.0);
}

TEST_CASE("a model with a zero classifier predicts 0.5 everywhere") {
  FusedModel model(tiny_config());
  model.init(3);
  model.head().classifier().weight().value.fill(0.0);
  model.head().classifier().bias().value.fill(0.0);
  model.global_net().classifier().weight().value.fill(0.0);
  model.global_net().classifier().bias().value.fill(0.0);
  model.local_net().classifier().weight().value.fill(0.0);
  model.local_net().classifier().bias().value.fill(0.0);
  cv::Mat frame(32, 48, CV_8UC3);
  cv::randu(frame, 0, 256);
  for (const ProbabilityMap& m : {infer_full(model, frame, {16, 16}, 4), infer_global(model, frame, {16, 16}),
                                  infer_local(model, frame, 4)}) {
    CHECK(m.height == 32);
    CHECK(m.width == 48);
    for (double v : m.values) CHECK(std::abs(v - 0.5) < 1e-12);
  }
}

TEST_CASE("full inference is independent of the batch size") {
  FusedModel model(tiny_config());
  model.init(5);
  cv::Mat frame(32, 48, CV_8UC3);
  cv::randu(frame, 0, 256);
  const ProbabilityMap a = infer_full(model, frame, {16, 16}, 1);
  const ProbabilityMap b = infer_full(model, frame, {16, 16}, 6);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
  CHECK(worst < 1e-12);
}

TEST_CASE("binarize") {
  ProbabilityMap m;
  m.height = 1;
  m.width = 4;
  m.values = {0.0, 0.49, 0.5, 1.0};
  CHECK(binarize(m, 0.5) == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(binarize(m, 0.0) == std::vector<std::uint8_t>{1, 1, 1, 1});
  CHECK(binarize(m, 1.0) == std::vector<std::uint8_t>{0, 0, 0, 1});
  CHECK_THROWS_AS(binarize(m, 1.5), Error);
}

TEST_CASE("16-bit maps round-trip within one quantization level") {
  TempDir dir("probmap");
  const ProbabilityMap m = random_map({40, 56}, 9);
  save_probability_map(m, dir / "x_MA.png", dir / "x_MA.json", R"({"stream":"fused"})");
  const cv::Mat raw = cv::imread((dir / "x_MA.png").string(), cv::IMREAD_UNCHANGED);
  CHECK(raw.type() == CV_16U);
  const ProbabilityMap back = load_probability_map(dir / "x_MA.png");
  CHECK(back.size() == m.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < m.values.size(); ++i) worst = std::max(worst, std::abs(back.values[i] - m.values[i]));
  CHECK(worst <= 0.5 / 65535.0 + 1e-12);
  FrameSize size;
  const auto levels = load_probability_levels(dir / "x_MA.png", &size);
  CHECK(levels == quantize16(m));
  CHECK(std::filesystem::exists(dir / "x_MA.json"));
}
