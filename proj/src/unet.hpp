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

#include <memory>
#include <string>
#include <vector>

#include "layers.hpp"
#include "tensor.hpp"

namespace lgunet {

struct UNetConfig {
  int in_channels = 3;
  int base_channels = 32;
  int depth = 3;  // number of 2x2 pooling stages
  int out_channels = 1;
  int height = 256;
  int width = 256;

  // Throws on depth < 1, base < 1, or an input size not divisible by 2^depth.
  void validate() const;
  // Channels of encoder level `level` (0 = first block, depth = bottleneck).
  int channels_at(int level) const { return base_channels << level; }
  int bottleneck_height() const { return height >> depth; }
  int bottleneck_width() const { return width >> depth; }
};

struct SegmentationOutput {
  Tensor logits;
  Tensor probabilities;
};

// U-Net with `depth` pooling levels. The encoder doubles channels at every
// level, the decoder upsamples with 2x2 transposed convolutions and
// concatenates the same-resolution encoder features. The last decoder feature
// map (base_channels wide, full input resolution) is exposed before the 1x1
// classification convolution.
class UNet {
 public:
  UNet(const std::string& name, const UNetConfig& cfg);

  struct Pass {
    Tensor features;
    Tensor logits;
  };

  void init(Rng& rng);
  Pass run(const Tensor& x, Mode mode);
  SegmentationOutput forward(const Tensor& x, Mode mode);
  Tensor penultimate_features(const Tensor& x, Mode mode);

  // Backpropagates the most recent run(). Either gradient may be null; the
  // feature gradient is added to the classification head's contribution.
  Tensor backward(const Tensor* d_features, const Tensor* d_logits);

  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Buffer>& out);
  std::vector<Parameter*> parameters();

  const UNetConfig& config() const { return cfg_; }
  const std::string& name() const { return name_; }
  void check_input(const Tensor& x) const;
  Conv2d& classifier() { return classifier_; }

 private:
  std::string name_;
  UNetConfig cfg_;
  std::vector<std::unique_ptr<ConvBlock>> encoders_;
  std::vector<MaxPool2x2> pools_;
  std::unique_ptr<ConvBlock> bottleneck_;
  std::vector<std::unique_ptr<ConvTranspose2x2>> upconvs_;
  std::vector<std::unique_ptr<ConvBlock>> decoders_;
  Conv2d classifier_;
  std::vector<int> skip_channels_;
};

}  // namespace lgunet
