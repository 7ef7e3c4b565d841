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

#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "error.hpp"

namespace lgunet {

Tensor::Tensor(int n, int c, int h, int w, double fill)
    : n_(n), c_(c), h_(h), w_(w) {
  require(n >= 0 && c >= 0 && h >= 0 && w >= 0, "tensor dimensions must be non-negative");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::same_shape(const Tensor& other) const {
  return n_ == other.n_ && c_ == other.c_ && h_ == other.h_ && w_ == other.w_;
}

std::string Tensor::shape_string() const {
  return std::to_string(n_) + "x" + std::to_string(c_) + "x" + std::to_string(h_) + "x" +
         std::to_string(w_);
}

Tensor Tensor::slice(int i) const {
  require(i >= 0 && i < n_, "tensor slice index out of range");
  Tensor out(1, c_, h_, w_);
  std::memcpy(out.data(), sample(i), sample_size() * sizeof(double));
  return out;
}

void Tensor::set_sample(int i, const Tensor& src) {
  require(i >= 0 && i < n_, "tensor sample index out of range");
  require(src.n() == 1 && src.c() == c_ && src.h() == h_ && src.w() == w_,
          "set_sample shape mismatch: " + src.shape_string() + " into " + shape_string());
  std::memcpy(sample(i), src.data(), sample_size() * sizeof(double));
}

void Tensor::add(const Tensor& other) {
  require(same_shape(other), "tensor add shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::scale(double factor) {
  for (double& v : data_) v *= factor;
}

double Tensor::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.n() == b.n() && a.h() == b.h() && a.w() == b.w(),
          "concat_channels: incompatible shapes " + a.shape_string() + " and " + b.shape_string());
  Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int i = 0; i < a.n(); ++i) {
    std::memcpy(out.sample(i), a.sample(i), a.sample_size() * sizeof(double));
    std::memcpy(out.sample(i) + a.sample_size(), b.sample(i), b.sample_size() * sizeof(double));
  }
  return out;
}

void split_channels(const Tensor& joined, int first_channels, Tensor& a, Tensor& b) {
  require(first_channels > 0 && first_channels < joined.c(), "split_channels: bad split point");
  a = Tensor(joined.n(), first_channels, joined.h(), joined.w());
  b = Tensor(joined.n(), joined.c() - first_channels, joined.h(), joined.w());
  for (int i = 0; i < joined.n(); ++i) {
    std::memcpy(a.sample(i), joined.sample(i), a.sample_size() * sizeof(double));
    std::memcpy(b.sample(i), joined.sample(i) + a.sample_size(), b.sample_size() * sizeof(double));
  }
}

Tensor sigmoid(const Tensor& logits) {
  Tensor out = logits;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

}  // namespace lgunet
