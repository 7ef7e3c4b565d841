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

#include "layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "error.hpp"

namespace lgunet {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Upper bound on im2col scratch, in doubles (16 MiB).
constexpr std::size_t kColBudget = std::size_t{1} << 21;

void he_normal(Tensor& t, double fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (double& v : t.values()) v = dist(rng);
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel)
    : in_(in_channels), out_(out_channels), k_(kernel) {
  require(in_channels > 0 && out_channels > 0, "conv channels must be positive");
  require(kernel > 0 && kernel % 2 == 1, "conv kernel must be odd");
  weight_ = {name + ".weight", Tensor(out_, in_, k_, k_), Tensor(out_, in_, k_, k_)};
  bias_ = {name + ".bias", Tensor(1, out_, 1, 1), Tensor(1, out_, 1, 1)};
}

void Conv2d::init(Rng& rng) {
  he_normal(weight_.value, static_cast<double>(in_) * k_ * k_, rng);
  bias_.value.zero();
}

void Conv2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

std::size_t Conv2d::rows_per_chunk(int width) const {
  const std::size_t k = static_cast<std::size_t>(in_) * k_ * k_;
  return std::max<std::size_t>(1, kColBudget / (k * static_cast<std::size_t>(width)));
}

void Conv2d::im2col(const double* x, int h, int w, int y0, int y1, double* col) const {
  const int pad = k_ / 2;
  const std::size_t cols = static_cast<std::size_t>(y1 - y0) * w;
  std::size_t row = 0;
  for (int ci = 0; ci < in_; ++ci) {
    const double* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx, ++row) {
        double* dst = col + row * cols;
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - pad;
          double* out_row = dst + static_cast<std::size_t>(y - y0) * w;
          if (sy < 0 || sy >= h) {
            std::fill(out_row, out_row + w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(sy) * w;
          const int shift = kx - pad;
          const int x_begin = std::max(0, -shift);
          const int x_end = std::min(w, w - shift);
          std::fill(out_row, out_row + x_begin, 0.0);
          std::copy(src + x_begin + shift, src + x_end + shift, out_row + x_begin);
          std::fill(out_row + x_end, out_row + w, 0.0);
        }
      }
    }
  }
}

void Conv2d::col2im(const double* col, int h, int w, int y0, int y1, double* dx) const {
  const int pad = k_ / 2;
  const std::size_t cols = static_cast<std::size_t>(y1 - y0) * w;
  std::size_t row = 0;
  for (int ci = 0; ci < in_; ++ci) {
    double* plane = dx + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx, ++row) {
        const double* src = col + row * cols;
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const double* in_row = src + static_cast<std::size_t>(y - y0) * w;
          double* dst = plane + static_cast<std::size_t>(sy) * w;
          const int shift = kx - pad;
          const int x_begin = std::max(0, -shift);
          const int x_end = std::min(w, w - shift);
          for (int x = x_begin; x < x_end; ++x) dst[x + shift] += in_row[x];
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x) {
  require(x.c() == in_, "conv " + weight_.name + ": expected " + std::to_string(in_) +
                            " input channels, got " + x.shape_string());
  input_ = x;
  const int h = x.h();
  const int w = x.w();
  const std::size_t hw = x.plane_size();
  const Eigen::Index kdim = static_cast<Eigen::Index>(in_) * k_ * k_;
  Tensor y(x.n(), out_, h, w);
  ConstMatMap weight(weight_.value.data(), out_, kdim);
  const std::size_t chunk_rows = rows_per_chunk(w);

  for (int n = 0; n < x.n(); ++n) {
    for (int y0 = 0; y0 < h; y0 += static_cast<int>(chunk_rows)) {
      const int y1 = std::min<int>(h, y0 + static_cast<int>(chunk_rows));
      const Eigen::Index cols = static_cast<Eigen::Index>(y1 - y0) * w;
      StridedMap out(y.sample(n) + static_cast<std::size_t>(y0) * w, out_, cols,
                     Eigen::OuterStride<>(hw));
      if (k_ == 1) {
        ConstStridedMap in(x.sample(n) + static_cast<std::size_t>(y0) * w, in_, cols,
                           Eigen::OuterStride<>(hw));
        out.noalias() = weight * in;
      } else {
        col_.resize(static_cast<std::size_t>(kdim) * cols);
        im2col(x.sample(n), h, w, y0, y1, col_.data());
        out.noalias() = weight * ConstMatMap(col_.data(), kdim, cols);
      }
    }
    for (int co = 0; co < out_; ++co) {
      const double b = bias_.value.data()[co];
      double* p = y.plane(n, co);
      for (std::size_t i = 0; i < hw; ++i) p[i] += b;
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  require(dy.n() == input_.n() && dy.c() == out_ && dy.h() == input_.h() && dy.w() == input_.w(),
          "conv " + weight_.name + ": gradient shape mismatch");
  const int h = input_.h();
  const int w = input_.w();
  const std::size_t hw = input_.plane_size();
  const Eigen::Index kdim = static_cast<Eigen::Index>(in_) * k_ * k_;
  Tensor dx(input_.n(), in_, h, w);
  ConstMatMap weight(weight_.value.data(), out_, kdim);
  MatMap dweight(weight_.grad.data(), out_, kdim);
  const std::size_t chunk_rows = rows_per_chunk(w);
  std::vector<double> dcol;

  for (int n = 0; n < input_.n(); ++n) {
    for (int co = 0; co < out_; ++co) {
      const double* p = dy.plane(n, co);
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += p[i];
      bias_.grad.data()[co] += s;
    }
    for (int y0 = 0; y0 < h; y0 += static_cast<int>(chunk_rows)) {
      const int y1 = std::min<int>(h, y0 + static_cast<int>(chunk_rows));
      const Eigen::Index cols = static_cast<Eigen::Index>(y1 - y0) * w;
      ConstStridedMap g(dy.sample(n) + static_cast<std::size_t>(y0) * w, out_, cols,
                        Eigen::OuterStride<>(hw));
      if (k_ == 1) {
        ConstStridedMap in(input_.sample(n) + static_cast<std::size_t>(y0) * w, in_, cols,
                           Eigen::OuterStride<>(hw));
        StridedMap din(dx.sample(n) + static_cast<std::size_t>(y0) * w, in_, cols,
                       Eigen::OuterStride<>(hw));
        dweight.noalias() += g * in.transpose();
        din.noalias() += weight.transpose() * g;
      } else {
        col_.resize(static_cast<std::size_t>(kdim) * cols);
        im2col(input_.sample(n), h, w, y0, y1, col_.data());
        dweight.noalias() += g * ConstMatMap(col_.data(), kdim, cols).transpose();
        dcol.resize(static_cast<std::size_t>(kdim) * cols);
        MatMap dc(dcol.data(), kdim, cols);
        dc.noalias() = weight.transpose() * g;
        col2im(dcol.data(), h, w, y0, y1, dx.sample(n));
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ConvTranspose2x2

ConvTranspose2x2::ConvTranspose2x2(const std::string& name, int in_channels, int out_channels)
    : in_(in_channels), out_(out_channels) {
  require(in_channels > 0 && out_channels > 0, "upconv channels must be positive");
  weight_ = {name + ".weight", Tensor(in_, out_, 2, 2), Tensor(in_, out_, 2, 2)};
  bias_ = {name + ".bias", Tensor(1, out_, 1, 1), Tensor(1, out_, 1, 1)};
}

void ConvTranspose2x2::init(Rng& rng) {
  he_normal(weight_.value, static_cast<double>(in_), rng);
  bias_.value.zero();
}

void ConvTranspose2x2::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Tensor ConvTranspose2x2::forward(const Tensor& x) {
  require(x.c() == in_, "upconv " + weight_.name + ": channel mismatch, got " + x.shape_string());
  input_ = x;
  const int h = x.h();
  const int w = x.w();
  const Eigen::Index hw = static_cast<Eigen::Index>(x.plane_size());
  const Eigen::Index rows = static_cast<Eigen::Index>(out_) * 4;
  Tensor y(x.n(), out_, 2 * h, 2 * w);
  ConstMatMap weight(weight_.value.data(), in_, rows);
  cols_.resize(static_cast<std::size_t>(rows * hw));
  MatMap cols(cols_.data(), rows, hw);

  for (int n = 0; n < x.n(); ++n) {
    cols.noalias() = weight.transpose() * ConstMatMap(x.sample(n), in_, hw);
    for (int co = 0; co < out_; ++co) {
      const double b = bias_.value.data()[co];
      double* dst = y.plane(n, co);
      for (int a = 0; a < 2; ++a) {
        for (int bx = 0; bx < 2; ++bx) {
          const double* src = cols_.data() + (co * 4 + a * 2 + bx) * hw;
          for (int i = 0; i < h; ++i) {
            double* out_row = dst + static_cast<std::size_t>(2 * i + a) * 2 * w + bx;
            const double* in_row = src + static_cast<std::size_t>(i) * w;
            for (int j = 0; j < w; ++j) out_row[2 * j] = in_row[j] + b;
          }
        }
      }
    }
  }
  return y;
}

Tensor ConvTranspose2x2::backward(const Tensor& dy) {
  const int h = input_.h();
  const int w = input_.w();
  require(dy.n() == input_.n() && dy.c() == out_ && dy.h() == 2 * h && dy.w() == 2 * w,
          "upconv " + weight_.name + ": gradient shape mismatch");
  const Eigen::Index hw = static_cast<Eigen::Index>(input_.plane_size());
  const Eigen::Index rows = static_cast<Eigen::Index>(out_) * 4;
  Tensor dx(input_.n(), in_, h, w);
  ConstMatMap weight(weight_.value.data(), in_, rows);
  MatMap dweight(weight_.grad.data(), in_, rows);
  cols_.resize(static_cast<std::size_t>(rows * hw));

  for (int n = 0; n < input_.n(); ++n) {
    for (int co = 0; co < out_; ++co) {
      const double* src = dy.plane(n, co);
      double s = 0.0;
      for (int a = 0; a < 2; ++a) {
        for (int bx = 0; bx < 2; ++bx) {
          double* dst = cols_.data() + (co * 4 + a * 2 + bx) * hw;
          for (int i = 0; i < h; ++i) {
            const double* g_row = src + static_cast<std::size_t>(2 * i + a) * 2 * w + bx;
            double* out_row = dst + static_cast<std::size_t>(i) * w;
            for (int j = 0; j < w; ++j) {
              out_row[j] = g_row[2 * j];
              s += g_row[2 * j];
            }
          }
        }
      }
      bias_.grad.data()[co] += s;
    }
    ConstMatMap g(cols_.data(), rows, hw);
    ConstMatMap in(input_.sample(n), in_, hw);
    dweight.noalias() += in * g.transpose();
    MatMap(dx.sample(n), in_, hw).noalias() = weight * g;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(const std::string& name, int channels)
    : channels_(channels), name_(name) {
  require(channels > 0, "batch norm channels must be positive");
  gamma_ = {name + ".gamma", Tensor(1, channels, 1, 1, 1.0), Tensor(1, channels, 1, 1)};
  beta_ = {name + ".beta", Tensor(1, channels, 1, 1), Tensor(1, channels, 1, 1)};
  running_mean_ = Tensor(1, channels, 1, 1, 0.0);
  running_var_ = Tensor(1, channels, 1, 1, 1.0);
}

void BatchNorm2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void BatchNorm2d::collect_buffers(std::vector<Buffer>& out) {
  out.push_back({name_ + ".running_mean", &running_mean_});
  out.push_back({name_ + ".running_var", &running_var_});
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  require(x.c() == channels_, "batch norm " + name_ + ": channel mismatch");
  last_mode_ = mode;
  const std::size_t hw = x.plane_size();
  const double count = static_cast<double>(hw) * x.n();
  xhat_ = Tensor(x.n(), x.c(), x.h(), x.w());
  inv_std_.assign(channels_, 0.0);
  Tensor y(x.n(), x.c(), x.h(), x.w());

  for (int c = 0; c < channels_; ++c) {
    double mean;
    double var;
    if (mode == Mode::kTrain) {
      double s = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const double* p = x.plane(n, c);
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      mean = s / count;
      double ss = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const double* p = x.plane(n, c);
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / count;
      const double unbiased = count > 1 ? ss / (count - 1) : var;
      double& rm = running_mean_.data()[c];
      double& rv = running_var_.data()[c];
      rm = (1.0 - kMomentum) * rm + kMomentum * mean;
      rv = (1.0 - kMomentum) * rv + kMomentum * unbiased;
    } else {
      mean = running_mean_.data()[c];
      var = running_var_.data()[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + kEpsilon);
    inv_std_[c] = inv_std;
    const double g = gamma_.value.data()[c];
    const double b = beta_.value.data()[c];
    for (int n = 0; n < x.n(); ++n) {
      const double* p = x.plane(n, c);
      double* xh = xhat_.plane(n, c);
      double* out = y.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        xh[i] = (p[i] - mean) * inv_std;
        out[i] = g * xh[i] + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  require(dy.same_shape(xhat_), "batch norm " + name_ + ": gradient shape mismatch");
  const std::size_t hw = dy.plane_size();
  const double count = static_cast<double>(hw) * dy.n();
  Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());

  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      const double* g = dy.plane(n, c);
      const double* xh = xhat_.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * xh[i];
      }
    }
    gamma_.grad.data()[c] += sum_dy_xhat;
    beta_.grad.data()[c] += sum_dy;
    const double scale = gamma_.value.data()[c] * inv_std_[c];
    for (int n = 0; n < dy.n(); ++n) {
      const double* g = dy.plane(n, c);
      const double* xh = xhat_.plane(n, c);
      double* out = dx.plane(n, c);
      if (last_mode_ == Mode::kTrain) {
        for (std::size_t i = 0; i < hw; ++i) {
          out[i] = scale * (g[i] - sum_dy / count - xh[i] * sum_dy_xhat / count);
        }
      } else {
        for (std::size_t i = 0; i < hw; ++i) out[i] = scale * g[i];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ReLU / MaxPool2x2

Tensor ReLU::forward(const Tensor& x) {
  output_ = x;
  for (double& v : output_.values()) v = v > 0.0 ? v : 0.0;
  return output_;
}

Tensor ReLU::backward(const Tensor& dy) const {
  require(dy.same_shape(output_), "relu: gradient shape mismatch");
  Tensor dx = dy;
  auto out = output_.values();
  auto g = dx.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(out[i] > 0.0)) g[i] = 0.0;
  }
  return dx;
}

Tensor MaxPool2x2::forward(const Tensor& x) {
  require(x.h() % 2 == 0 && x.w() % 2 == 0,
          "max pool: spatial size must be even, got " + x.shape_string());
  in_h_ = x.h();
  in_w_ = x.w();
  const int oh = x.h() / 2;
  const int ow = x.w() / 2;
  Tensor y(x.n(), x.c(), oh, ow);
  argmax_.resize(y.size());
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double* p = x.plane(n, c);
      double* out = y.plane(n, c);
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j, ++o) {
          const std::uint32_t base = static_cast<std::uint32_t>(2 * i * in_w_ + 2 * j);
          std::uint32_t best = base;
          for (std::uint32_t cand : {base + 1, base + static_cast<std::uint32_t>(in_w_),
                                     base + static_cast<std::uint32_t>(in_w_) + 1}) {
            if (p[cand] > p[best]) best = cand;
          }
          argmax_[o] = best;
          out[i * ow + j] = p[best];
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2x2::backward(const Tensor& dy) const {
  Tensor dx(dy.n(), dy.c(), in_h_, in_w_);
  require(dy.size() == argmax_.size(), "max pool: gradient shape mismatch");
  const std::size_t ohw = dy.plane_size();
  std::size_t o = 0;
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const double* g = dy.plane(n, c);
      double* out = dx.plane(n, c);
      for (std::size_t i = 0; i < ohw; ++i, ++o) out[argmax_[o]] += g[i];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ConvBlock

ConvBlock::ConvBlock(const std::string& name, int in_channels, int out_channels)
    : conv1_(name + ".conv1", in_channels, out_channels, 3),
      bn1_(name + ".bn1", out_channels),
      conv2_(name + ".conv2", out_channels, out_channels, 3),
      bn2_(name + ".bn2", out_channels) {}

void ConvBlock::init(Rng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
}

Tensor ConvBlock::forward(const Tensor& x, Mode mode) {
  Tensor h = relu1_.forward(bn1_.forward(conv1_.forward(x), mode));
  return relu2_.forward(bn2_.forward(conv2_.forward(h), mode));
}

Tensor ConvBlock::backward(const Tensor& dy) {
  Tensor g = conv2_.backward(bn2_.backward(relu2_.backward(dy)));
  return conv1_.backward(bn1_.backward(relu1_.backward(g)));
}

void ConvBlock::collect(std::vector<Parameter*>& out) {
  conv1_.collect(out);
  bn1_.collect(out);
  conv2_.collect(out);
  bn2_.collect(out);
}

void ConvBlock::collect_buffers(std::vector<Buffer>& out) {
  bn1_.collect_buffers(out);
  bn2_.collect_buffers(out);
}

}  // namespace lgunet
