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
#include <random>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace lgunet {

enum class Mode { kTrain, kEval };

using Rng = std::mt19937_64;

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Non-trainable state that still belongs in a checkpoint (normalization
// running statistics).
struct Buffer {
  std::string name;
  Tensor* value;
};

// 2-D convolution, stride 1, zero padding kernel/2 so odd kernels preserve the
// spatial size. Weight layout: out x in x k x k.
class Conv2d {
 public:
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Parameter*>& out);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t rows_per_chunk(int width) const;
  void im2col(const double* x, int h, int w, int y0, int y1, double* col) const;
  void col2im(const double* col, int h, int w, int y0, int y1, double* dx) const;

  int in_;
  int out_;
  int k_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
  std::vector<double> col_;
};

// Transposed convolution with a 2x2 kernel and stride 2 (exact 2x upsampling).
// Weight layout: in x out x 2 x 2.
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2(const std::string& name, int in_channels, int out_channels);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Parameter*>& out);

 private:
  int in_;
  int out_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
  std::vector<double> cols_;
};

// Batch normalization over (N, H, W) per channel. Training mode normalizes with
// batch statistics and updates the running estimates; evaluation mode uses the
// running estimates and is a fixed affine map.
class BatchNorm2d {
 public:
  BatchNorm2d(const std::string& name, int channels);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Buffer>& out);

  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  int channels_;
  std::string name_;
  Parameter gamma_;
  Parameter beta_;
  Tensor running_mean_;
  Tensor running_var_;
  Mode last_mode_ = Mode::kEval;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor output_;
};

// 2x2 max pooling, stride 2.
class MaxPool2x2 {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  int in_h_ = 0;
  int in_w_ = 0;
  std::vector<std::uint32_t> argmax_;
};

// conv3x3-bn-relu-conv3x3-bn-relu.
class ConvBlock {
 public:
  ConvBlock(const std::string& name, int in_channels, int out_channels);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Buffer>& out);

  int out_channels() const { return conv1_.out_channels(); }

 private:
  Conv2d conv1_;
  BatchNorm2d bn1_;
  ReLU relu1_;
  Conv2d conv2_;
  BatchNorm2d bn2_;
  ReLU relu2_;
};

}  // namespace lgunet
