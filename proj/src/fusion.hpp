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

#include <span>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "layers.hpp"
#include "unet.hpp"

namespace lgunet {

struct FusedConfig {
  UNetConfig global;
  UNetConfig local;
  int head_width = 64;
  FrameSize frame{2816, 3328};

  void validate() const;
};

// Scales the window's footprint by (global_h / frame_h, global_w / frame_w).
GlobalCropRect map_window_to_global(const PatchWindow& window, FrameSize global_size);

// Bilinear resampling of `features` (one sample, C x H x W) restricted to
// `rect` onto an out_h x out_w grid. Output pixel (i, j) samples the source
// at cell-center coordinates top + (i + 0.5) * rect_h / out_h - 0.5 (and the
// same along x), clamped to the source extent.
Tensor crop_and_rescale(const Tensor& features, const GlobalCropRect& rect, int out_h, int out_w);
// Adjoint of crop_and_rescale: accumulates `d_out` into `d_features`.
void crop_and_rescale_backward(const Tensor& d_out, const GlobalCropRect& rect,
                               Tensor& d_features);

// Two 3x3 conv-bn-relu layers and a 1x1 classification conv.
class FusionHead {
 public:
  FusionHead(const std::string& name, int in_channels, int width);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& d_logits);
  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Buffer>& out);

  Conv2d& conv1() { return conv1_; }
  Conv2d& classifier() { return conv3_; }

 private:
  Conv2d conv1_;
  BatchNorm2d bn1_;
  ReLU relu1_;
  Conv2d conv2_;
  BatchNorm2d bn2_;
  ReLU relu2_;
  Conv2d conv3_;
};

struct FusedItem {
  int image = 0;  // index into the batch of global images
  PatchWindow window;
};

struct FusedModes {
  Mode global = Mode::kEval;
  Mode local = Mode::kEval;
  Mode head = Mode::kEval;

  static FusedModes all(Mode m) { return {m, m, m}; }
};

struct FusedPass {
  Tensor global_logits;   // n_images x 1 x global_h x global_w
  Tensor global_features; // n_images x Cg x global_h x global_w
  Tensor local_features;  // n_items x Cl x patch x patch
  Tensor logits;          // n_items x 1 x patch x patch (final map)
};

// GlobalNet + LocalNet joined at the end of their decoders. Global features of
// each image are computed once per batch and cropped for every window that
// refers to that image.
class FusedModel {
 public:
  explicit FusedModel(const FusedConfig& cfg);

  void init(std::uint64_t seed);
  FusedPass forward(const Tensor& global_images, const Tensor& patches,
                    std::span<const FusedItem> items, FusedModes modes);
  // Evaluation-mode final logits for windows of images whose global features
  // were computed beforehand (see UNet::run on the global stream).
  Tensor predict_windows(const Tensor& global_features, const Tensor& patches,
                         std::span<const FusedItem> items);

  // Backpropagates the last forward. With `into_streams` false only the head
  // receives gradients.
  void backward(const Tensor* d_global_logits, const Tensor& d_logits, bool into_streams);

  UNet& global_net() { return global_; }
  UNet& local_net() { return local_; }
  FusionHead& head() { return head_; }
  const FusedConfig& config() const { return cfg_; }

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> head_parameters();
  std::vector<Buffer> buffers();

 private:
  Tensor fuse(const Tensor& global_features, const Tensor& local_features,
             std::span<const FusedItem> items, Mode head_mode, bool remember);

  FusedConfig cfg_;
  UNet global_;
  UNet local_;
  FusionHead head_;
  std::vector<FusedItem> items_;
  std::vector<GlobalCropRect> rects_;
  Tensor global_features_shape_;
  int n_images_ = 0;
};

struct FusedOutput {
  SegmentationOutput local;   // final map for the window
  SegmentationOutput global;  // GlobalNet's own map for the whole image
};

// Single (image, window) evaluation-mode pass. `global_image` is the
// downsampled whole image (1 x 3 x gh x gw), `patch` the window's pixels.
FusedOutput fused_forward(FusedModel& model, const Tensor& global_image, const Tensor& patch,
                          const PatchWindow& window);

}  // namespace lgunet
