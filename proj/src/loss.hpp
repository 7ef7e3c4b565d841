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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "layers.hpp"
#include "tensor.hpp"

namespace lgunet {

struct LossWeights {
  double lambda1 = 1.0;   // global stream
  double lambda2 = 1.0;   // local stream
  double lambda3 = 1e-5;  // L2 regularization

  void validate() const;
};

struct ClassBalance {
  double gamma = 1.0;

  void validate() const;
};

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before the logs.
inline constexpr double kProbClamp = 1e-7;

// Class-balanced binary cross entropy over one map:
//   L = -(|Y-| / (|Y+| gamma)) sum_{Y+} log p - sum_{Y-} log(1 - p).
// With no positive pixels the positive weight is 0.
double weighted_ce(std::span<const double> probabilities, std::span<const std::uint8_t> labels,
                   double gamma);

// Same loss evaluated from logits; writes dL/dlogit * scale into `d_logits`
// (exact derivative of the clamped loss) and returns the unscaled loss.
double weighted_ce_from_logits(std::span<const double> logits,
                               std::span<const std::uint8_t> labels, double gamma,
                               std::span<double> d_logits, double scale = 1.0);

// Batch form: per-sample loss averaged over the batch; `labels` holds the
// masks of all samples back to back. Returns the mean and fills d_logits with
// the gradient of (scale * mean).
double batch_weighted_ce(const Tensor& logits, std::span<const std::uint8_t> labels, double gamma,
                         Tensor& d_logits, double scale = 1.0);

// phi(theta) = sum of squared parameter values.
double l2_penalty(std::span<Parameter* const> params);
// Adds lambda3 * d phi / d theta to every parameter gradient.
void add_l2_gradient(std::span<Parameter* const> params, double lambda3);

// lambda1 * L_global + lambda2 * L_local + lambda3 * phi(theta).
double combined_loss(const Tensor& global_probabilities, std::span<const std::uint8_t> global_labels,
                     const Tensor& local_probabilities, std::span<const std::uint8_t> local_labels,
                     const LossWeights& weights, double gamma,
                     std::span<Parameter* const> params);

}  // namespace lgunet
