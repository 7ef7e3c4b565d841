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
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lgunet {

struct PRPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 0.0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
};

enum class Integration {
  kStep,       // sum (R_i - R_{i-1}) * P_i, R_0 = 0
  kTrapezoid,  // diagnostic alternative
};

struct PRCurve {
  std::vector<PRPoint> points;  // thresholds strictly descending
  double aupr = 0.0;
};

// One point per distinct score value t (descending), predicting positive when
// score >= t. Throws a data error when `truth` has no positive pixel.
PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> truth,
                 Integration rule = Integration::kStep);

double aupr(const PRCurve& curve, Integration rule = Integration::kStep);

// Streaming accumulator for pooling pixels across images. Scores are kept as
// run-length (value, positives, negatives) triples, so memory scales with the
// number of distinct values.
class PRAccumulator {
 public:
  void add(std::span<const double> scores, std::span<const std::uint8_t> truth);
  PRCurve curve(Integration rule = Integration::kStep) const;
  std::uint64_t positives() const { return positives_; }
  std::uint64_t pixels() const { return pixels_; }

 private:
  struct Run {
    double value;
    std::uint64_t pos;
    std::uint64_t neg;
  };
  std::vector<Run> runs_;  // descending by value
  std::uint64_t positives_ = 0;
  std::uint64_t pixels_ = 0;
};

// Fixed-point histogram variant for maps stored with 16-bit precision
// (value = level / 65535). Exact for quantized inputs.
class QuantizedPRAccumulator {
 public:
  QuantizedPRAccumulator();
  void add(std::span<const std::uint16_t> levels, std::span<const std::uint8_t> truth);
  PRCurve curve(Integration rule = Integration::kStep) const;

 private:
  std::vector<std::uint64_t> pos_;
  std::vector<std::uint64_t> neg_;
};

struct ImageScore {
  std::string id;
  std::optional<double> aupr;  // empty when the image has no positive pixel
};

struct SplitScore {
  PRCurve pooled;
  std::vector<ImageScore> per_image;
};

struct ScoredMap {
  std::string id;
  std::span<const double> scores;
};

struct TruthMask {
  std::string id;
  std::span<const std::uint8_t> truth;
};

// Pools all pixels of all images into one PR computation and also reports
// each image on its own. Ids must match pairwise.
SplitScore evaluate_split(std::span<const ScoredMap> maps, std::span<const TruthMask> truths,
                          Integration rule = Integration::kStep);

}  // namespace lgunet
