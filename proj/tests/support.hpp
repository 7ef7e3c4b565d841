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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "layers.hpp"
#include "tensor.hpp"

namespace lgunet::testing {

inline Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

inline std::vector<std::uint8_t> random_labels(std::size_t n, double prevalence, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(prevalence);
  std::vector<std::uint8_t> out(n);
  for (auto& v : out) v = coin(rng) ? 1 : 0;
  return out;
}

inline double relative_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

// Moves every parameter and normalization statistic off its initial value.
// Zero biases over a dead ReLU neighbourhood give pre-activations of exactly
// 0, where a central difference sees half the one-sided slope.
inline void jitter(std::vector<Parameter*> params, std::vector<Buffer> buffers, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.1);
  std::uniform_real_distribution<double> var(0.5, 1.5);
  for (Parameter* p : params) {
    for (double& v : p->value.values()) v += g(rng);
  }
  for (const Buffer& b : buffers) {
    const bool is_var = b.name.find("running_var") != std::string::npos;
    for (double& v : b.value->values()) v = is_var ? var(rng) : g(rng);
  }
}

// Relative agreement, with an absolute floor for gradients that vanish
// analytically (a bias feeding batch-statistics normalization) where the
// finite difference only sees rounding noise.
inline bool gradients_agree(double analytic, double numeric, double rel, double abs_floor = 1e-7) {
  return std::abs(analytic - numeric) <= rel * std::max(std::abs(analytic), std::abs(numeric)) + abs_floor;
}

// Central difference of `loss` with respect to one element of `value`.
inline double central_difference(double& value, const std::function<double()>& loss, double h = 1e-6) {
  const double saved = value;
  value = saved + h;
  const double up = loss();
  value = saved - h;
  const double down = loss();
  value = saved;
  return (up - down) / (2.0 * h);
}

// Fresh empty directory below the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lgunet_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& child) const { return path_ / child; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace lgunet::testing
