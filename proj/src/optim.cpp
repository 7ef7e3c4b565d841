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

#include "optim.hpp"

#include <cmath>

#include "error.hpp"

namespace lgunet {

double PolySchedule::at(std::int64_t step) const {
  require(total_steps > 0, "schedule needs a positive step count");
  if (step >= total_steps) return 0.0;
  if (step <= 0) return initial_lr;
  return initial_lr * std::pow(1.0 - static_cast<double>(step) / static_cast<double>(total_steps), power);
}

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.n(), p->value.c(), p->value.h(), p->value.w());
    v_.emplace_back(p->value.n(), p->value.c(), p->value.h(), p->value.w());
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->grad.zero();
}

void Adam::step(double lr) {
  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto value = params_[k]->value.values();
    auto grad = params_[k]->grad.values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
    }
  }
}

}  // namespace lgunet
