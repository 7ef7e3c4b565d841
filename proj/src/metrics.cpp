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

#include "metrics.hpp"

#include <algorithm>

#include "error.hpp"

namespace lgunet {
namespace {

PRCurve curve_from_runs(const std::vector<double>& values, const std::vector<std::uint64_t>& pos,
                        const std::vector<std::uint64_t>& neg, std::uint64_t total_pos,
                        Integration rule) {
  if (total_pos == 0) throw_data("precision-recall is undefined: ground truth has no positive pixel");
  PRCurve c;
  c.points.reserve(values.size());
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    tp += pos[i];
    fp += neg[i];
    PRPoint p;
    p.threshold = values[i];
    p.tp = tp;
    p.fp = fp;
    p.fn = total_pos - tp;
    p.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
    p.recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    c.points.push_back(p);
  }
  c.aupr = aupr(c, rule);
  return c;
}

void check_inputs(std::size_t scores, std::span<const std::uint8_t> truth) {
  require(scores == truth.size(), "score map and truth mask differ in size");
  for (std::uint8_t t : truth) require(t <= 1, "truth mask must be binary");
}

}  // namespace

PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> truth,
                 Integration rule) {
  PRAccumulator acc;
  acc.add(scores, truth);
  return acc.curve(rule);
}

double aupr(const PRCurve& curve, Integration rule) {
  double area = 0.0;
  double prev_recall = 0.0;
  double prev_precision = 1.0;
  for (const PRPoint& p : curve.points) {
    const double dr = p.recall - prev_recall;
    area += rule == Integration::kStep ? dr * p.precision : dr * 0.5 * (p.precision + prev_precision);
    prev_recall = p.recall;
    prev_precision = p.precision;
  }
  return area;
}

void PRAccumulator::add(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  check_inputs(scores.size(), truth);
  std::vector<std::pair<double, std::uint8_t>> pairs(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(scores[i] == scores[i], "score map contains NaN");
    pairs[i] = {scores[i], truth[i]};
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Run> fresh;
  for (const auto& [v, t] : pairs) {
    if (fresh.empty() || fresh.back().value != v) fresh.push_back({v, 0, 0});
    (t ? fresh.back().pos : fresh.back().neg) += 1;
    positives_ += t;
  }
  pixels_ += scores.size();

  std::vector<Run> merged;
  merged.reserve(runs_.size() + fresh.size());
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < runs_.size() || j < fresh.size()) {
    if (j == fresh.size() || (i < runs_.size() && runs_[i].value > fresh[j].value)) {
      merged.push_back(runs_[i++]);
    } else if (i == runs_.size() || fresh[j].value > runs_[i].value) {
      merged.push_back(fresh[j++]);
    } else {
      merged.push_back({runs_[i].value, runs_[i].pos + fresh[j].pos, runs_[i].neg + fresh[j].neg});
      ++i;
      ++j;
    }
  }
  runs_ = std::move(merged);
}

PRCurve PRAccumulator::curve(Integration rule) const {
  std::vector<double> values;
  std::vector<std::uint64_t> pos;
  std::vector<std::uint64_t> neg;
  values.reserve(runs_.size());
  pos.reserve(runs_.size());
  neg.reserve(runs_.size());
  for (const Run& r : runs_) {
    values.push_back(r.value);
    pos.push_back(r.pos);
    neg.push_back(r.neg);
  }
  return curve_from_runs(values, pos, neg, positives_, rule);
}

QuantizedPRAccumulator::QuantizedPRAccumulator() : pos_(65536, 0), neg_(65536, 0) {}

void QuantizedPRAccumulator::add(std::span<const std::uint16_t> levels,
                                 std::span<const std::uint8_t> truth) {
  check_inputs(levels.size(), truth);
  for (std::size_t i = 0; i < levels.size(); ++i) (truth[i] ? pos_ : neg_)[levels[i]] += 1;
}

PRCurve QuantizedPRAccumulator::curve(Integration rule) const {
  std::vector<double> values;
  std::vector<std::uint64_t> pos;
  std::vector<std::uint64_t> neg;
  std::uint64_t total = 0;
  for (int level = 65535; level >= 0; --level) {
    if (pos_[level] == 0 && neg_[level] == 0) continue;
    values.push_back(level / 65535.0);
    pos.push_back(pos_[level]);
    neg.push_back(neg_[level]);
    total += pos_[level];
  }
  return curve_from_runs(values, pos, neg, total, rule);
}

SplitScore evaluate_split(std::span<const ScoredMap> maps, std::span<const TruthMask> truths,
                          Integration rule) {
  require(maps.size() == truths.size(), "evaluate_split: map and truth counts differ");
  require(!maps.empty(), "evaluate_split: no images");
  SplitScore out;
  PRAccumulator pooled;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].id != truths[i].id) {
      throw_data("evaluate_split: id mismatch '" + maps[i].id + "' vs '" + truths[i].id + "'");
    }
    pooled.add(maps[i].scores, truths[i].truth);
    ImageScore score{maps[i].id, std::nullopt};
    const bool has_positive =
        std::any_of(truths[i].truth.begin(), truths[i].truth.end(), [](std::uint8_t t) { return t != 0; });
    if (has_positive) score.aupr = pr_curve(maps[i].scores, truths[i].truth, rule).aupr;
    out.per_image.push_back(score);
  }
  out.pooled = pooled.curve(rule);
  return out;
}

}  // namespace lgunet
