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
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "fusion.hpp"
#include "geometry.hpp"

namespace lgunet {

struct ProbabilityMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major, each in [0, 1]
  std::string provenance;      // model id / config fingerprint, free-form

  FrameSize size() const { return {height, width}; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
};

struct WindowPatch {
  PatchWindow window;
  std::vector<double> values;  // window.size^2, row-major
};

// Places every window at its offset. The windows must cover the patch grid of
// `frame` exactly once; a missing cell or a duplicate is an error naming the
// (row, col) grid cell.
ProbabilityMap stitch(std::span<const WindowPatch> windows, FrameSize frame, int patch);
std::vector<WindowPatch> split(const ProbabilityMap& map, int patch);

// Evaluates `predict` on the patch grid in batches and stitches the result.
using WindowPredictor =
    std::function<std::vector<std::vector<double>>(std::span<const PatchWindow> windows)>;
ProbabilityMap tile_predict(FrameSize frame, int patch, const WindowPredictor& predict,
                            int batch_size);

// Fused-model map of a center-cropped frame: one GlobalNet pass, then the
// LocalNet + fusion head on every grid window.
ProbabilityMap infer_full(FusedModel& model, const cv::Mat& frame_image, FrameSize global_size,
                          int batch_size = 16);
// GlobalNet alone, bilinearly upsampled to the frame.
ProbabilityMap infer_global(FusedModel& model, const cv::Mat& frame_image, FrameSize global_size);
// LocalNet alone (its own classification conv), stitched.
ProbabilityMap infer_local(FusedModel& model, const cv::Mat& frame_image, int batch_size = 16);

std::vector<std::uint8_t> binarize(const ProbabilityMap& map, double threshold);

std::vector<std::uint16_t> quantize16(const ProbabilityMap& map);
// 16-bit grayscale PNG (probability * 65535) plus a JSON sidecar.
void save_probability_map(const ProbabilityMap& map, const std::filesystem::path& png,
                          const std::filesystem::path& sidecar, const std::string& provenance_json);
ProbabilityMap load_probability_map(const std::filesystem::path& png);
std::vector<std::uint16_t> load_probability_levels(const std::filesystem::path& png, FrameSize* size);

}  // namespace lgunet
