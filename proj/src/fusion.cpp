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

#include "fusion.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace lgunet {
namespace {

struct AxisPlan {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> w_lo;
  std::vector<double> w_hi;
};

AxisPlan plan_axis(double start, double end, int out, int in_size) {
  AxisPlan p;
  p.lo.resize(out);
  p.hi.resize(out);
  p.w_lo.resize(out);
  p.w_hi.resize(out);
  const double step = (end - start) / out;
  for (int o = 0; o < out; ++o) {
    double src = start + (o + 0.5) * step - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in_size - 1);
    const double frac = src - lo;
    p.lo[o] = lo;
    p.hi[o] = hi;
    p.w_lo[o] = 1.0 - frac;
    p.w_hi[o] = frac;
  }
  return p;
}

void check_rect(const GlobalCropRect& rect, int h, int w) {
  constexpr double kSlack = 1e-9;
  require(rect.top >= -kSlack && rect.left >= -kSlack && rect.bottom <= h + kSlack &&
              rect.right <= w + kSlack && rect.top < rect.bottom && rect.left < rect.right,
          "crop rect outside the feature frame");
  require(rect.height() * rect.width() >= 1.0,
          "degenerate crop rect: area below one feature cell");
}

}  // namespace

void FusedConfig::validate() const {
  global.validate();
  local.validate();
  require(head_width >= 1, "fusion head width must be >= 1");
  require(frame.height > 0 && frame.width > 0, "frame size must be positive");
  require(global.in_channels == local.in_channels, "global and local streams disagree on input channels");
}

GlobalCropRect map_window_to_global(const PatchWindow& window, FrameSize global_size) {
  require(window.size > 0 && window.top >= 0 && window.left >= 0 &&
              window.top + window.size <= window.frame.height &&
              window.left + window.size <= window.frame.width,
          "patch window outside its frame");
  const double sy = static_cast<double>(global_size.height) / window.frame.height;
  const double sx = static_cast<double>(global_size.width) / window.frame.width;
  GlobalCropRect r;
  r.top = window.top * sy;
  r.left = window.left * sx;
  // Computed from the integer edge so that the last cell lands exactly on the
  // frame boundary and neighbouring windows share edge values bit-for-bit.
  r.bottom = (window.top + window.size) * sy;
  r.right = (window.left + window.size) * sx;
  if (window.top + window.size == window.frame.height) r.bottom = global_size.height;
  if (window.left + window.size == window.frame.width) r.right = global_size.width;
  return r;
}

Tensor crop_and_rescale(const Tensor& features, const GlobalCropRect& rect, int out_h, int out_w) {
  require(features.n() == 1, "crop_and_rescale expects a single sample");
  require(out_h > 0 && out_w > 0, "crop_and_rescale: output size must be positive");
  check_rect(rect, features.h(), features.w());
  const AxisPlan py = plan_axis(rect.top, rect.bottom, out_h, features.h());
  const AxisPlan px = plan_axis(rect.left, rect.right, out_w, features.w());
  Tensor out(1, features.c(), out_h, out_w);
  const int w = features.w();
  for (int c = 0; c < features.c(); ++c) {
    const double* src = features.plane(0, c);
    double* dst = out.plane(0, c);
    for (int i = 0; i < out_h; ++i) {
      const double* r0 = src + static_cast<std::size_t>(py.lo[i]) * w;
      const double* r1 = src + static_cast<std::size_t>(py.hi[i]) * w;
      const double a = py.w_lo[i];
      const double b = py.w_hi[i];
      for (int j = 0; j < out_w; ++j) {
        const double top = r0[px.lo[j]] * px.w_lo[j] + r0[px.hi[j]] * px.w_hi[j];
        const double bottom = r1[px.lo[j]] * px.w_lo[j] + r1[px.hi[j]] * px.w_hi[j];
        dst[i * out_w + j] = a * top + b * bottom;
      }
    }
  }
  return out;
}

void crop_and_rescale_backward(const Tensor& d_out, const GlobalCropRect& rect,
                               Tensor& d_features) {
  require(d_out.n() == 1 && d_features.n() == 1 && d_out.c() == d_features.c(),
          "crop_and_rescale_backward: shape mismatch");
  check_rect(rect, d_features.h(), d_features.w());
  const int out_h = d_out.h();
  const int out_w = d_out.w();
  const AxisPlan py = plan_axis(rect.top, rect.bottom, out_h, d_features.h());
  const AxisPlan px = plan_axis(rect.left, rect.right, out_w, d_features.w());
  const int w = d_features.w();
  for (int c = 0; c < d_out.c(); ++c) {
    const double* g = d_out.plane(0, c);
    double* dst = d_features.plane(0, c);
    for (int i = 0; i < out_h; ++i) {
      double* r0 = dst + static_cast<std::size_t>(py.lo[i]) * w;
      double* r1 = dst + static_cast<std::size_t>(py.hi[i]) * w;
      const double a = py.w_lo[i];
      const double b = py.w_hi[i];
      for (int j = 0; j < out_w; ++j) {
        const double v = g[i * out_w + j];
        r0[px.lo[j]] += a * px.w_lo[j] * v;
        r0[px.hi[j]] += a * px.w_hi[j] * v;
        r1[px.lo[j]] += b * px.w_lo[j] * v;
        r1[px.hi[j]] += b * px.w_hi[j] * v;
      }
    }
  }
}

// ---------------------------------------------------------------------------

FusionHead::FusionHead(const std::string& name, int in_channels, int width)
    : conv1_(name + ".conv1", in_channels, width, 3),
      bn1_(name + ".bn1", width),
      conv2_(name + ".conv2", width, width, 3),
      bn2_(name + ".bn2", width),
      conv3_(name + ".conv3", width, 1, 1) {}

void FusionHead::init(Rng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  conv3_.init(rng);
}

Tensor FusionHead::forward(const Tensor& x, Mode mode) {
  Tensor h = relu1_.forward(bn1_.forward(conv1_.forward(x), mode));
  h = relu2_.forward(bn2_.forward(conv2_.forward(h), mode));
  return conv3_.forward(h);
}

Tensor FusionHead::backward(const Tensor& d_logits) {
  Tensor g = relu2_.backward(conv3_.backward(d_logits));
  g = relu1_.backward(conv2_.backward(bn2_.backward(g)));
  return conv1_.backward(bn1_.backward(g));
}

void FusionHead::collect(std::vector<Parameter*>& out) {
  conv1_.collect(out);
  bn1_.collect(out);
  conv2_.collect(out);
  bn2_.collect(out);
  conv3_.collect(out);
}

void FusionHead::collect_buffers(std::vector<Buffer>& out) {
  bn1_.collect_buffers(out);
  bn2_.collect_buffers(out);
}

// ---------------------------------------------------------------------------

FusedModel::FusedModel(const FusedConfig& cfg)
    : cfg_(cfg),
      global_("global", cfg.global),
      local_("local", cfg.local),
      head_("head", cfg.local.base_channels + cfg.global.base_channels, cfg.head_width) {
  cfg_.validate();
}

void FusedModel::init(std::uint64_t seed) {
  Rng rng(seed);
  global_.init(rng);
  local_.init(rng);
  head_.init(rng);
}

Tensor FusedModel::fuse(const Tensor& global_features, const Tensor& local_features,
                        std::span<const FusedItem> items, Mode head_mode, bool remember) {
  require(static_cast<int>(items.size()) == local_features.n(),
          "fused forward: one item per patch required");
  const FrameSize global_size{global_features.h(), global_features.w()};
  const int ph = local_features.h();
  const int pw = local_features.w();
  if (remember) {
    items_.assign(items.begin(), items.end());
    rects_.clear();
    n_images_ = global_features.n();
    global_features_shape_ = Tensor(1, global_features.c(), global_features.h(), global_features.w());
  }
  Tensor cropped(local_features.n(), global_features.c(), ph, pw);
  for (std::size_t k = 0; k < items.size(); ++k) {
    const FusedItem& item = items[k];
    require(item.image >= 0 && item.image < global_features.n(), "fused forward: bad image index");
    require(item.window.size == ph && item.window.size == pw,
            "fused forward: window size does not match patch");
    const GlobalCropRect rect = map_window_to_global(item.window, global_size);
    if (remember) rects_.push_back(rect);
    cropped.set_sample(static_cast<int>(k),
                       crop_and_rescale(global_features.slice(item.image), rect, ph, pw));
  }
  return head_.forward(concat_channels(local_features, cropped), head_mode);
}

FusedPass FusedModel::forward(const Tensor& global_images, const Tensor& patches,
                              std::span<const FusedItem> items, FusedModes modes) {
  require(patches.h() == cfg_.local.height && patches.w() == cfg_.local.width,
          "fused forward: patch size " + patches.shape_string() + " does not match the local stream");
  UNet::Pass g = global_.run(global_images, modes.global);
  UNet::Pass l = local_.run(patches, modes.local);
  FusedPass pass;
  pass.logits = fuse(g.features, l.features, items, modes.head, true);
  pass.global_logits = std::move(g.logits);
  pass.global_features = std::move(g.features);
  pass.local_features = std::move(l.features);
  return pass;
}

Tensor FusedModel::predict_windows(const Tensor& global_features, const Tensor& patches,
                                   std::span<const FusedItem> items) {
  require(global_features.c() == cfg_.global.base_channels,
          "predict_windows: global features have the wrong channel count");
  UNet::Pass l = local_.run(patches, Mode::kEval);
  return fuse(global_features, l.features, items, Mode::kEval, false);
}

void FusedModel::backward(const Tensor* d_global_logits, const Tensor& d_logits,
                          bool into_streams) {
  Tensor d_joined = head_.backward(d_logits);
  if (!into_streams) return;
  Tensor d_local;
  Tensor d_cropped;
  split_channels(d_joined, cfg_.local.base_channels, d_local, d_cropped);
  local_.backward(&d_local, nullptr);

  const Tensor& shape = global_features_shape_;
  Tensor d_global(n_images_, shape.c(), shape.h(), shape.w());
  for (std::size_t k = 0; k < items_.size(); ++k) {
    Tensor d_one(1, shape.c(), shape.h(), shape.w());
    crop_and_rescale_backward(d_cropped.slice(static_cast<int>(k)), rects_[k], d_one);
    Tensor acc = d_global.slice(items_[k].image);
    acc.add(d_one);
    d_global.set_sample(items_[k].image, acc);
  }
  global_.backward(&d_global, d_global_logits);
}

std::vector<Parameter*> FusedModel::parameters() {
  std::vector<Parameter*> out;
  global_.collect(out);
  local_.collect(out);
  head_.collect(out);
  return out;
}

std::vector<Parameter*> FusedModel::head_parameters() {
  std::vector<Parameter*> out;
  head_.collect(out);
  return out;
}

std::vector<Buffer> FusedModel::buffers() {
  std::vector<Buffer> out;
  global_.collect_buffers(out);
  local_.collect_buffers(out);
  head_.collect_buffers(out);
  return out;
}

FusedOutput fused_forward(FusedModel& model, const Tensor& global_image, const Tensor& patch,
                          const PatchWindow& window) {
  require(global_image.n() == 1 && patch.n() == 1, "fused_forward takes a single image and patch");
  const FusedItem item{0, window};
  FusedPass pass = model.forward(global_image, patch, std::span<const FusedItem>(&item, 1),
                                 FusedModes::all(Mode::kEval));
  FusedOutput out;
  out.local.probabilities = sigmoid(pass.logits);
  out.local.logits = std::move(pass.logits);
  out.global.probabilities = sigmoid(pass.global_logits);
  out.global.logits = std::move(pass.global_logits);
  return out;
}

}  // namespace lgunet
