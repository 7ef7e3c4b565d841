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

#include <cmath>

#include "error.hpp"
#include "loss.hpp"
#include "support.hpp"

using namespace lgunet;
using namespace lgunet::testing;

namespace {

// Pixel-by-pixel evaluation straight from the definition.
double naive_weighted_ce(const std::vector<double>& p, const std::vector<std::uint8_t>& y, double gamma) {
  double pos = 0.0;
  double neg = 0.0;
  for (auto v : y) (v ? pos : neg) += 1.0;
  const double w = pos > 0.0 ? neg / (pos * gamma) : 0.0;
  double loss = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double q = std::min(std::max(p[j], 1e-7), 1.0 - 1e-7);
    loss += y[j] ? -w * std::log(q) : -std::log(1.0 - q);
  }
  return loss;
}

std::vector<double> random_probs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n);
  for (double& v : p) v = u(rng);
  return p;
}

}  // namespace

TEST_CASE("four-pixel hand cases") {
  const std::vector<double> p(4, 0.5);
  const std::vector<std::uint8_t> y{1, 0, 0, 0};
  CHECK(std::abs(weighted_ce(p, y, 1.0) - 6.0 * std::log(2.0)) < 1e-12);
  CHECK(std::abs(weighted_ce(p, y, 3.0) - 4.0 * std::log(2.0)) < 1e-12);
  CHECK(std::abs(naive_weighted_ce(p, y, 1.0) - 4.1588830833596715) < 1e-12);
}

TEST_CASE("matches the per-pixel oracle on random instances") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> g(0.5, 4.0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng() % 10000;
    const auto p = random_probs(n, rng());
    const auto y = random_labels(n, 0.05 + 0.4 * (t % 5) / 4.0, rng());
    const double gamma = g(rng);
    const double a = weighted_ce(p, y, gamma);
    const double b = naive_weighted_ce(p, y, gamma);
    CHECK(relative_error(a, b) < 1e-9);
  }
}

TEST_CASE("logit form equals probability form and its gradient is exact") {
  const std::size_t n = 64;
  const Tensor z = random_tensor(1, 1, 8, 8, 5, -4.0, 4.0);
  const auto y = random_labels(n, 0.3, 6);
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = 1.0 / (1.0 + std::exp(-z.data()[i]));
  std::vector<double> d(n);
  const double from_logits = weighted_ce_from_logits(z.values(), y, 2.0, d);
  CHECK(relative_error(from_logits, weighted_ce(p, y, 2.0)) < 1e-12);
  std::vector<double> zz(z.data(), z.data() + n);
  for (std::size_t i = 0; i < n; i += 7) {
    std::vector<double> scratch(n);
    const double numeric = central_difference(zz[i], [&] { return weighted_ce_from_logits(zz, y, 2.0, scratch); });
    CHECK(gradients_agree(d[i], numeric, 1e-6, 1e-9));
  }
}

TEST_CASE("saturated logits follow the clamp") {
  std::vector<double> z{40.0, -40.0};
  const std::vector<std::uint8_t> y{0, 1};
  std::vector<double> d(2);
  const double loss = weighted_ce_from_logits(z, y, 1.0, d);
  CHECK(loss == doctest::Approx(-2.0 * std::log(1e-7)));
  CHECK(d[0] == 0.0);
  CHECK(d[1] == 0.0);
}

TEST_CASE("no positive pixels drops the positive term") {
  const std::vector<double> p{0.2, 0.4};
  const std::vector<std::uint8_t> y{0, 0};
  CHECK(weighted_ce(p, y, 1.0) == doctest::Approx(-std::log(0.8) - std::log(0.6)).epsilon(1e-14));
  const std::vector<double> eps(5, 1e-12);
  const std::vector<std::uint8_t> none(5, 0);
  CHECK(weighted_ce(eps, none, 1.0) < 1e-6);
}

TEST_CASE("nonnegativity, gradient sign and gamma monotonicity") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng() % 200;
    auto p = random_probs(n, rng());
    auto y = random_labels(n, 0.3, rng());
    y[0] = 1;
    y[1] = 0;
    CHECK(weighted_ce(p, y, 1.0) >= 0.0);
    for (std::size_t j : {std::size_t{0}, std::size_t{1}}) {
      const double dp = central_difference(p[j], [&] { return weighted_ce(p, y, 1.3); }, 1e-7);
      if (y[j]) CHECK(dp < 0.0);
      else CHECK(dp > 0.0);
    }
    p[0] = std::min(p[0], 0.9);  // imperfect positive
    double previous = weighted_ce(p, y, 0.5);
    for (double gamma : {1.0, 2.0, 4.0, 8.0}) {
      const double now = weighted_ce(p, y, gamma);
      CHECK(now < previous);
      previous = now;
    }
  }
}

TEST_CASE("invalid inputs are rejected") {
  const std::vector<double> p{0.5, 0.5};
  CHECK_THROWS_AS(weighted_ce(p, std::vector<std::uint8_t>{1}, 1.0), Error);
  CHECK_THROWS_AS(weighted_ce(p, std::vector<std::uint8_t>{1, 0}, 0.0), Error);
  CHECK_THROWS_AS(weighted_ce(std::vector<double>{}, std::vector<std::uint8_t>{}, 1.0), Error);
  LossWeights w{1.0, 1.0, -1.0};
  CHECK_THROWS_AS(w.validate(), Error);
}

TEST_CASE("batch loss is the mean of per-sample losses") {
  const Tensor z = random_tensor(3, 1, 4, 4, 8);
  const auto y = random_labels(48, 0.25, 9);
  Tensor d;
  const double mean = batch_weighted_ce(z, y, 1.0, d, 2.0);
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> scratch(16);
    sum += weighted_ce_from_logits({z.sample(i), 16}, {y.data() + 16 * i, 16}, 1.0, scratch);
  }
  CHECK(relative_error(mean, sum / 3.0) < 1e-12);
  std::vector<double> scratch(16);
  weighted_ce_from_logits({z.sample(1), 16}, {y.data() + 16, 16}, 1.0, scratch);
  CHECK(relative_error(d.sample(1)[5], scratch[5] * 2.0 / 3.0) < 1e-12);
}

TEST_CASE("combined loss examples") {
  Tensor p(1, 1, 2, 2, 0.5);
  const std::vector<std::uint8_t> y{1, 0, 0, 0};
  std::vector<Parameter*> none;
  CHECK(std::abs(combined_loss(p, y, p, y, {1.0, 1.0, 0.0}, 1.0, none) - 12.0 * std::log(2.0)) < 1e-12);
  CHECK(combined_loss(p, y, p, y, {1.0, 1.0, 0.0}, 1.0, none) == doctest::Approx(8.3178).epsilon(1e-4));

  Parameter theta{"theta", Tensor(1, 1, 1, 3, 0.0), Tensor(1, 1, 1, 3, 0.0)};
  theta.value.data()[0] = 1.0;
  theta.value.data()[1] = -2.0;
  std::vector<Parameter*> params{&theta};
  CHECK(l2_penalty(params) == 5.0);
  const Tensor q = random_tensor(1, 1, 2, 2, 4, 0.05, 0.95);
  const auto yl = std::vector<std::uint8_t>{0, 1, 1, 0};
  const double lambda3 = 1e-2;
  const double expected = 0.7 * weighted_ce(q.values(), yl, 1.0) + lambda3 * 5.0;
  CHECK(combined_loss(p, y, q, yl, {0.0, 0.7, lambda3}, 1.0, params) == doctest::Approx(expected).epsilon(1e-14));

  Parameter zero{"zero", Tensor(1, 1, 1, 3, 0.0), Tensor(1, 1, 1, 3, 0.0)};
  std::vector<Parameter*> zeros{&zero};
  CHECK(combined_loss(p, y, q, yl, {1.0, 1.0, 1.0}, 1.0, zeros) ==
        combined_loss(p, y, q, yl, {1.0, 1.0, 0.0}, 1.0, zeros));

  add_l2_gradient(params, 0.5);
  CHECK(theta.grad.data()[0] == 1.0);
  CHECK(theta.grad.data()[1] == -2.0);
}
