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

#include "unet.hpp"

#include "error.hpp"

namespace lgunet {

void UNetConfig::validate() const {
  require(in_channels >= 1, "unet: in_channels must be >= 1");
  require(base_channels >= 1, "unet: base_channels must be >= 1");
  require(out_channels >= 1, "unet: out_channels must be >= 1");
  require(depth >= 1 && depth <= 16, "unet: depth must be in [1, 16]");
  const int unit = 1 << depth;
  require(height > 0 && width > 0 && height % unit == 0 && width % unit == 0,
          "unet: input " + std::to_string(height) + "x" + std::to_string(width) +
              " is not divisible by 2^" + std::to_string(depth));
}

UNet::UNet(const std::string& name, const UNetConfig& cfg)
    : name_(name), cfg_(cfg), classifier_(name + ".classifier", cfg.base_channels, cfg.out_channels, 1) {
  cfg_.validate();
  int in = cfg_.in_channels;
  for (int level = 0; level < cfg_.depth; ++level) {
    const int ch = cfg_.channels_at(level);
    encoders_.push_back(std::make_unique<ConvBlock>(name + ".enc" + std::to_string(level), in, ch));
    pools_.emplace_back();
    in = ch;
  }
  bottleneck_ = std::make_unique<ConvBlock>(name + ".bottleneck", in, cfg_.channels_at(cfg_.depth));
  // decoders_[level] restores the resolution of encoder level `level`.
  for (int level = 0; level < cfg_.depth; ++level) {
    const int ch = cfg_.channels_at(level);
    upconvs_.push_back(std::make_unique<ConvTranspose2x2>(
        name + ".up" + std::to_string(level), cfg_.channels_at(level + 1), ch));
    decoders_.push_back(
        std::make_unique<ConvBlock>(name + ".dec" + std::to_string(level), 2 * ch, ch));
  }
}

void UNet::init(Rng& rng) {
  for (auto& e : encoders_) e->init(rng);
  bottleneck_->init(rng);
  for (int level = 0; level < cfg_.depth; ++level) {
    upconvs_[level]->init(rng);
    decoders_[level]->init(rng);
  }
  classifier_.init(rng);
}

void UNet::check_input(const Tensor& x) const {
  require(x.n() >= 1, name_ + ": empty batch");
  require(x.c() == cfg_.in_channels, name_ + ": expected " + std::to_string(cfg_.in_channels) +
                                         " channels, got " + x.shape_string());
  const int unit = 1 << cfg_.depth;
  require(x.h() % unit == 0 && x.w() % unit == 0,
          name_ + ": input " + x.shape_string() + " is not divisible by 2^" +
              std::to_string(cfg_.depth));
}

UNet::Pass UNet::run(const Tensor& x, Mode mode) {
  check_input(x);
  std::vector<Tensor> skips;
  skips.reserve(cfg_.depth);
  Tensor h = x;
  for (int level = 0; level < cfg_.depth; ++level) {
    skips.push_back(encoders_[level]->forward(h, mode));
    h = pools_[level].forward(skips.back());
  }
  h = bottleneck_->forward(h, mode);
  skip_channels_.assign(cfg_.depth, 0);
  for (int level = cfg_.depth - 1; level >= 0; --level) {
    Tensor up = upconvs_[level]->forward(h);
    skip_channels_[level] = skips[level].c();
    h = decoders_[level]->forward(concat_channels(skips[level], up), mode);
  }
  Pass pass;
  pass.logits = classifier_.forward(h);
  pass.features = std::move(h);
  return pass;
}

SegmentationOutput UNet::forward(const Tensor& x, Mode mode) {
  Pass pass = run(x, mode);
  SegmentationOutput out;
  out.probabilities = sigmoid(pass.logits);
  out.logits = std::move(pass.logits);
  return out;
}

Tensor UNet::penultimate_features(const Tensor& x, Mode mode) { return run(x, mode).features; }

Tensor UNet::backward(const Tensor* d_features, const Tensor* d_logits) {
  require(d_features != nullptr || d_logits != nullptr, name_ + ": backward needs a gradient");
  Tensor g;
  if (d_logits != nullptr) {
    g = classifier_.backward(*d_logits);
    if (d_features != nullptr) g.add(*d_features);
  } else {
    g = *d_features;
  }
  // Decoder levels ran from depth-1 down to 0, so unwind from 0 upwards.
  std::vector<Tensor> d_skips(cfg_.depth);
  for (int level = 0; level < cfg_.depth; ++level) {
    Tensor d_up;
    split_channels(decoders_[level]->backward(g), skip_channels_[level], d_skips[level], d_up);
    g = upconvs_[level]->backward(d_up);
  }
  g = bottleneck_->backward(g);
  for (int level = cfg_.depth - 1; level >= 0; --level) {
    g = pools_[level].backward(g);
    g.add(d_skips[level]);
    g = encoders_[level]->backward(g);
  }
  return g;
}

void UNet::collect(std::vector<Parameter*>& out) {
  for (auto& e : encoders_) e->collect(out);
  bottleneck_->collect(out);
  for (int level = 0; level < cfg_.depth; ++level) {
    upconvs_[level]->collect(out);
    decoders_[level]->collect(out);
  }
  classifier_.collect(out);
}

void UNet::collect_buffers(std::vector<Buffer>& out) {
  for (auto& e : encoders_) e->collect_buffers(out);
  bottleneck_->collect_buffers(out);
  for (auto& d : decoders_) d->collect_buffers(out);
}

std::vector<Parameter*> UNet::parameters() {
  std::vector<Parameter*> out;
  collect(out);
  return out;
}

}  // namespace lgunet
