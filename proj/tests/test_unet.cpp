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

#include <map>

#include "error.hpp"
#include "support.hpp"
#include "unet.hpp"

using namespace lgunet;
using namespace lgunet::testing;

namespace {

UNetConfig tiny(int depth, int base, int h, int w) {
  UNetConfig cfg;
  cfg.base_channels = base;
  cfg.depth = depth;
  cfg.height = h;
  cfg.width = w;
  return cfg;
}

std::map<std::string, Parameter*> by_name(UNet& net) {
  std::map<std::string, Parameter*> out;
  for (Parameter* p : net.parameters()) out[p->name] = p;
  return out;
}

double weighted_sum(const Tensor& a, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * r.data()[i];
  return s;
}

void check_unet_gradients(Mode mode, std::uint64_t seed) {
  UNet net("u", tiny(1, 2, 8, 8));
  Rng rng(seed);
  net.init(rng);
  std::vector<Buffer> buffers;
  net.collect_buffers(buffers);
  jitter(net.parameters(), buffers, seed + 9);
  Tensor x = random_tensor(2, 3, 8, 8, seed + 1);
  const UNet::Pass pass = net.run(x, mode);
  const Tensor r_logits = random_tensor(2, 1, 8, 8, seed + 2);
  const Tensor r_feat = random_tensor(2, 2, 8, 8, seed + 3);
  auto params = net.parameters();
  for (Parameter* p : params) p->grad.zero();
  const Tensor dx = net.backward(&r_feat, &r_logits);
  auto loss = [&] {
    const UNet::Pass q = net.run(x, mode);
    return weighted_sum(q.logits, r_logits) + weighted_sum(q.features, r_feat);
  };
  std::mt19937_64 pick(seed + 4);
  int checked = 0;
  for (Parameter* p : params) {
    const std::size_t i = pick() % p->value.size();
    const double numeric = central_difference(p->value.data()[i], loss);
    INFO(p->name << "[" << i << "] analytic " << p->grad.data()[i] << " numeric " << numeric);
    CHECK(gradients_agree(p->grad.data()[i], numeric, 1e-4));
    ++checked;
  }
  CHECK(checked == static_cast<int>(params.size()));
  for (int t = 0; t < 10; ++t) {
    const std::size_t i = pick() % x.size();
    CHECK(gradients_agree(dx.data()[i], central_difference(x.data()[i], loss), 1e-4));
  }
}

}  // namespace

TEST_CASE("bottleneck size examples") {
  CHECK(tiny(6, 32, 640, 640).bottleneck_height() == 10);
  CHECK(tiny(3, 32, 256, 256).bottleneck_height() == 32);
}

TEST_CASE("encoder channel law") {
  UNet net("g", tiny(3, 32, 256, 256));
  auto params = by_name(net);
  const int expected[] = {32, 64, 128};
  for (int level = 0; level < 3; ++level) {
    CHECK(params.at("g.enc" + std::to_string(level) + ".conv1.weight")->value.n() == expected[level]);
    CHECK(params.at("g.dec" + std::to_string(level) + ".conv2.weight")->value.n() == expected[level]);
  }
  CHECK(params.at("g.bottleneck.conv2.weight")->value.n() == 256);
}

TEST_CASE("construction rejects sizes not divisible by 2^depth") {
  CHECK_THROWS_AS(UNet("x", tiny(3, 4, 20, 24)), Error);
  CHECK_THROWS_AS(UNet("x", tiny(0, 4, 16, 16)), Error);
  CHECK_THROWS_AS(UNet("x", tiny(2, 0, 16, 16)), Error);
  CHECK_NOTHROW(UNet("x", tiny(2, 4, 20, 24)));
}

TEST_CASE("shape round trip over depths and sizes") {
  for (int depth = 1; depth <= 4; ++depth) {
    const int unit = 1 << depth;
    UNet net("s", tiny(depth, 2, 2 * unit, 3 * unit));
    Rng rng(depth);
    net.init(rng);
    const Tensor x = random_tensor(1, 3, 2 * unit, 3 * unit, 7);
    const SegmentationOutput out = net.forward(x, Mode::kEval);
    CHECK(out.logits.c() == 1);
    CHECK(out.logits.h() == x.h());
    CHECK(out.logits.w() == x.w());
    for (double p : out.probabilities.values()) {
      CHECK(std::isfinite(p));
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    const Tensor f = net.penultimate_features(x, Mode::kEval);
    CHECK(f.c() == 2);
    CHECK(f.h() == x.h());
  }
}

TEST_CASE("input shape mismatch is rejected") {
  UNet net("s", tiny(2, 2, 16, 16));
  Rng rng(1);
  net.init(rng);
  CHECK_THROWS_AS(net.forward(Tensor(1, 3, 16, 18), Mode::kEval), Error);
  CHECK_NOTHROW(net.forward(Tensor(1, 3, 16, 20), Mode::kEval));
  CHECK_THROWS_AS(net.forward(Tensor(1, 1, 16, 16), Mode::kEval), Error);
}

TEST_CASE("zero classifier gives probability one half") {
  UNet net("z", tiny(2, 3, 16, 16));
  Rng rng(4);
  net.init(rng);
  net.classifier().weight().value.zero();
  net.classifier().bias().value.zero();
  const SegmentationOutput out = net.forward(random_tensor(2, 3, 16, 16, 3), Mode::kEval);
  for (double p : out.probabilities.values()) CHECK(p == 0.5);
}

TEST_CASE("evaluation mode is deterministic") {
  UNet net("d", tiny(2, 3, 16, 16));
  Rng rng(9);
  net.init(rng);
  const Tensor x = random_tensor(1, 3, 16, 16, 10);
  const Tensor a = net.penultimate_features(x, Mode::kEval);
  const Tensor b = net.penultimate_features(x, Mode::kEval);
  CHECK(std::equal(a.data(), a.data() + a.size(), b.data()));
}

TEST_CASE("finite-difference gradients, fixed normalization statistics") {
  check_unet_gradients(Mode::kEval, 100);
}

TEST_CASE("finite-difference gradients, batch statistics") {
  check_unet_gradients(Mode::kTrain, 200);
}

TEST_CASE("deeper network gradients") {
  UNet net("u", tiny(2, 2, 8, 8));
  Rng rng(77);
  net.init(rng);
  std::vector<Buffer> buffers;
  net.collect_buffers(buffers);
  jitter(net.parameters(), buffers, 81);
  Tensor x = random_tensor(1, 3, 8, 8, 78);
  net.run(x, Mode::kEval);
  const Tensor r = random_tensor(1, 1, 8, 8, 79);
  auto params = net.parameters();
  for (Parameter* p : params) p->grad.zero();
  net.backward(nullptr, &r);
  auto loss = [&] { return weighted_sum(net.run(x, Mode::kEval).logits, r); };
  std::mt19937_64 pick(80);
  for (Parameter* p : params) {
    const std::size_t i = pick() % p->value.size();
    INFO(p->name);
    CHECK(gradients_agree(p->grad.data()[i], central_difference(p->value.data()[i], loss), 1e-4));
  }
}
