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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lgunet {

// Dense NCHW tensor of doubles. A FeatureMap in the model code is a Tensor
// with n == 1, or one sample of a batch.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0);

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }
  std::size_t sample_size() const { return plane_size() * c_; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double* sample(int i) { return data_.data() + i * sample_size(); }
  const double* sample(int i) const { return data_.data() + i * sample_size(); }
  double* plane(int i, int ch) { return sample(i) + ch * plane_size(); }
  const double* plane(int i, int ch) const { return sample(i) + ch * plane_size(); }

  double& at(int i, int ch, int y, int x) {
    return data_[((static_cast<std::size_t>(i) * c_ + ch) * h_ + y) * w_ + x];
  }
  double at(int i, int ch, int y, int x) const {
    return data_[((static_cast<std::size_t>(i) * c_ + ch) * h_ + y) * w_ + x];
  }

  void fill(double value);
  void zero() { fill(0.0); }
  bool same_shape(const Tensor& other) const;
  std::string shape_string() const;

  // Copies sample `i` into a new 1-sample tensor.
  Tensor slice(int i) const;
  // Overwrites sample `i` with the single sample held by `src`.
  void set_sample(int i, const Tensor& src);

  void add(const Tensor& other);
  void scale(double factor);
  double squared_norm() const;
  bool all_finite() const;

 private:
  int n_ = 0;
  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<double> data_;
};

// Channel concatenation [a, b] per sample; both must agree on n, h and w.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Inverse of concat_channels: splits the gradient back into the two parts.
void split_channels(const Tensor& joined, int first_channels, Tensor& a, Tensor& b);

Tensor sigmoid(const Tensor& logits);

}  // namespace lgunet
