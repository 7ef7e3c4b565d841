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

#include "loss.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace lgunet {
namespace {

struct Counts {
  double positives = 0;
  double negatives = 0;
};

Counts count_labels(std::span<const std::uint8_t> labels) {
  Counts c;
  for (std::uint8_t y : labels) {
    require(y <= 1, "loss labels must be binary");
    if (y) c.positives += 1;
    else c.negatives += 1;
  }
  return c;
}

double positive_weight(const Counts& c, double gamma) {
  return c.positives > 0 ? c.negatives / (c.positives * gamma) : 0.0;
}

void check_gamma(double gamma) {
  require(std::isfinite(gamma) && gamma > 0, "gamma must be a positive finite number");
}

// Mean of the per-sample losses over the first `n` samples of `probs`.
double batch_mean_ce(const Tensor& probs, std::span<const std::uint8_t> labels, double gamma) {
  require(labels.size() == probs.size(), "loss: label count does not match the prediction");
  const std::size_t per = probs.sample_size();
  double total = 0.0;
  for (int n = 0; n < probs.n(); ++n) {
    total += weighted_ce(std::span<const double>(probs.sample(n), per), labels.subspan(n * per, per),
                         gamma);
  }
  return total / probs.n();
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda1, lambda2, lambda3}) {
    require(std::isfinite(v) && v >= 0, "loss weights must be finite and non-negative");
  }
}

void ClassBalance::validate() const { check_gamma(gamma); }

double weighted_ce(std::span<const double> probabilities, std::span<const std::uint8_t> labels,
                   double gamma) {
  check_gamma(gamma);
  require(!labels.empty(), "weighted_ce needs at least one pixel");
  require(probabilities.size() == labels.size(), "weighted_ce: shape mismatch");
  const Counts c = count_labels(labels);
  const double wpos = positive_weight(c, gamma);
  double pos_sum = 0.0;
  double neg_sum = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const double p = std::clamp(probabilities[j], kProbClamp, 1.0 - kProbClamp);
    if (labels[j]) pos_sum += std::log(p);
    else neg_sum += std::log1p(-p);
  }
  return -wpos * pos_sum - neg_sum;
}

double weighted_ce_from_logits(std::span<const double> logits,
                               std::span<const std::uint8_t> labels, double gamma,
                               std::span<double> d_logits, double scale) {
  check_gamma(gamma);
  require(!labels.empty(), "weighted_ce needs at least one pixel");
  require(logits.size() == labels.size() && d_logits.size() == labels.size(),
          "weighted_ce: shape mismatch");
  const Counts c = count_labels(labels);
  const double wpos = positive_weight(c, gamma);
  double loss = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const double p = 1.0 / (1.0 + std::exp(-logits[j]));
    const bool clamped = p < kProbClamp || p > 1.0 - kProbClamp;
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    if (labels[j]) {
      loss -= wpos * std::log(pc);
      d_logits[j] = clamped ? 0.0 : -wpos * (1.0 - p) * scale;
    } else {
      loss -= std::log1p(-pc);
      d_logits[j] = clamped ? 0.0 : p * scale;
    }
  }
  return loss;
}

double batch_weighted_ce(const Tensor& logits, std::span<const std::uint8_t> labels, double gamma,
                         Tensor& d_logits, double scale) {
  require(labels.size() == logits.size(), "loss: label count does not match the prediction");
  require(logits.n() >= 1, "loss: empty batch");
  d_logits = Tensor(logits.n(), logits.c(), logits.h(), logits.w());
  const std::size_t per = logits.sample_size();
  const double per_sample_scale = scale / logits.n();
  double total = 0.0;
  for (int n = 0; n < logits.n(); ++n) {
    total += weighted_ce_from_logits(std::span<const double>(logits.sample(n), per),
                                     labels.subspan(n * per, per), gamma,
                                     std::span<double>(d_logits.sample(n), per), per_sample_scale);
  }
  return total / logits.n();
}

double l2_penalty(std::span<Parameter* const> params) {
  double s = 0.0;
  for (const Parameter* p : params) s += p->value.squared_norm();
  return s;
}

void add_l2_gradient(std::span<Parameter* const> params, double lambda3) {
  if (lambda3 == 0.0) return;
  for (Parameter* p : params) {
    auto g = p->grad.values();
    auto v = p->value.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * lambda3 * v[i];
  }
}

double combined_loss(const Tensor& global_probabilities, std::span<const std::uint8_t> global_labels,
                     const Tensor& local_probabilities, std::span<const std::uint8_t> local_labels,
                     const LossWeights& weights, double gamma,
                     std::span<Parameter* const> params) {
  weights.validate();
  double total = 0.0;
  if (weights.lambda1 != 0.0) {
    total += weights.lambda1 * batch_mean_ce(global_probabilities, global_labels, gamma);
  }
  if (weights.lambda2 != 0.0) {
    total += weights.lambda2 * batch_mean_ce(local_probabilities, local_labels, gamma);
  }
  if (weights.lambda3 != 0.0) total += weights.lambda3 * l2_penalty(params);
  return total;
}

}  // namespace lgunet
