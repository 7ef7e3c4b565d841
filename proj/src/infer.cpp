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

#include "infer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "data.hpp"
#include "error.hpp"

namespace lgunet {

namespace fs = std::filesystem;

ProbabilityMap stitch(std::span<const WindowPatch> windows, FrameSize frame, int patch) {
  require(patch > 0 && frame.height % patch == 0 && frame.width % patch == 0,
          "stitch: frame " + frame.str() + " is not divisible by " + std::to_string(patch));
  const int rows = frame.height / patch;
  const int cols = frame.width / patch;
  std::vector<char> seen(static_cast<std::size_t>(rows) * cols, 0);
  ProbabilityMap map;
  map.height = frame.height;
  map.width = frame.width;
  map.values.assign(static_cast<std::size_t>(frame.height) * frame.width, 0.0);
  for (const WindowPatch& wp : windows) {
    const PatchWindow& w = wp.window;
    const std::string cell = "(" + std::to_string(w.row) + ", " + std::to_string(w.col) + ")";
    require(w.size == patch && w.row >= 0 && w.row < rows && w.col >= 0 && w.col < cols &&
                w.top == w.row * patch && w.left == w.col * patch,
            "stitch: window " + cell + " is not a cell of the " + std::to_string(rows) + "x" +
                std::to_string(cols) + " grid");
    require(wp.values.size() == static_cast<std::size_t>(patch) * patch,
            "stitch: window " + cell + " has the wrong number of values");
    char& flag = seen[static_cast<std::size_t>(w.row) * cols + w.col];
    if (flag) throw_invalid("stitch: duplicate window at grid cell " + cell);
    flag = 1;
    for (int r = 0; r < patch; ++r) {
      std::copy_n(wp.values.begin() + static_cast<std::ptrdiff_t>(r) * patch, patch,
                  map.values.begin() + static_cast<std::ptrdiff_t>(w.top + r) * frame.width + w.left);
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!seen[static_cast<std::size_t>(r) * cols + c]) {
        throw_invalid("stitch: missing window at grid cell (" + std::to_string(r) + ", " +
                      std::to_string(c) + ")");
      }
    }
  }
  return map;
}

std::vector<WindowPatch> split(const ProbabilityMap& map, int patch) {
  std::vector<WindowPatch> out;
  for (const PatchWindow& w : patch_grid(map.size(), patch)) {
    WindowPatch wp{w, std::vector<double>(static_cast<std::size_t>(patch) * patch)};
    for (int r = 0; r < patch; ++r) {
      for (int c = 0; c < patch; ++c) wp.values[static_cast<std::size_t>(r) * patch + c] = map.at(w.top + r, w.left + c);
    }
    out.push_back(std::move(wp));
  }
  return out;
}

ProbabilityMap tile_predict(FrameSize frame, int patch, const WindowPredictor& predict,
                            int batch_size) {
  require(batch_size >= 1, "tile_predict: batch size must be >= 1");
  const std::vector<PatchWindow> grid = patch_grid(frame, patch);
  std::vector<WindowPatch> results;
  results.reserve(grid.size());
  for (std::size_t start = 0; start < grid.size(); start += batch_size) {
    const std::size_t count = std::min<std::size_t>(batch_size, grid.size() - start);
    std::span<const PatchWindow> batch(grid.data() + start, count);
    std::vector<std::vector<double>> values = predict(batch);
    require(values.size() == count, "tile_predict: predictor returned the wrong batch size");
    for (std::size_t k = 0; k < count; ++k) results.push_back({batch[k], std::move(values[k])});
  }
  return stitch(results, frame, patch);
}

namespace {

Tensor patches_tensor(const cv::Mat& frame_image, std::span<const PatchWindow> windows) {
  const int size = windows.front().size;
  Tensor t(static_cast<int>(windows.size()), 3, size, size);
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const cv::Rect roi(windows[k].left, windows[k].top, size, size);
    image_to_tensor(frame_image(roi), t, static_cast<int>(k));
  }
  return t;
}

std::vector<std::vector<double>> per_sample_probabilities(const Tensor& logits) {
  const Tensor probs = sigmoid(logits);
  std::vector<std::vector<double>> out(probs.n());
  for (int n = 0; n < probs.n(); ++n) {
    out[n].assign(probs.sample(n), probs.sample(n) + probs.sample_size());
  }
  return out;
}

void check_frame(const FusedModel& model, const cv::Mat& frame_image) {
  const FrameSize frame = model.config().frame;
  if (frame_image.rows != frame.height || frame_image.cols != frame.width) {
    throw_invalid("inference: image is " + std::to_string(frame_image.rows) + "x" +
                  std::to_string(frame_image.cols) + " but the model expects the cropped frame " +
                  frame.str());
  }
}

}  // namespace

ProbabilityMap infer_full(FusedModel& model, const cv::Mat& frame_image, FrameSize global_size,
                          int batch_size) {
  check_frame(model, frame_image);
  Sample whole{frame_image, cv::Mat(), ""};
  const Tensor global_input = image_to_tensor(make_global_input(whole, global_size).image);
  const Tensor global_features = model.global_net().run(global_input, Mode::kEval).features;
  const int patch = model.config().local.height;
  return tile_predict(
      model.config().frame, patch,
      [&](std::span<const PatchWindow> windows) {
        std::vector<FusedItem> items;
        for (const PatchWindow& w : windows) items.push_back({0, w});
        return per_sample_probabilities(
            model.predict_windows(global_features, patches_tensor(frame_image, windows), items));
      },
      batch_size);
}

ProbabilityMap infer_global(FusedModel& model, const cv::Mat& frame_image, FrameSize global_size) {
  check_frame(model, frame_image);
  Sample whole{frame_image, cv::Mat(), ""};
  const Tensor global_input = image_to_tensor(make_global_input(whole, global_size).image);
  const SegmentationOutput out = model.global_net().forward(global_input, Mode::kEval);
  const GlobalCropRect whole_rect{0.0, 0.0, static_cast<double>(out.probabilities.h()),
                                  static_cast<double>(out.probabilities.w())};
  const Tensor up = crop_and_rescale(out.probabilities, whole_rect, frame_image.rows, frame_image.cols);
  ProbabilityMap map;
  map.height = frame_image.rows;
  map.width = frame_image.cols;
  map.values.assign(up.data(), up.data() + up.size());
  for (double& v : map.values) v = std::clamp(v, 0.0, 1.0);
  return map;
}

ProbabilityMap infer_local(FusedModel& model, const cv::Mat& frame_image, int batch_size) {
  check_frame(model, frame_image);
  const int patch = model.config().local.height;
  return tile_predict(
      model.config().frame, patch,
      [&](std::span<const PatchWindow> windows) {
        return per_sample_probabilities(
            model.local_net().run(patches_tensor(frame_image, windows), Mode::kEval).logits);
      },
      batch_size);
}

std::vector<std::uint8_t> binarize(const ProbabilityMap& map, double threshold) {
  require(threshold >= 0.0 && threshold <= 1.0, "binarize: threshold must be in [0, 1]");
  std::vector<std::uint8_t> out(map.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = map.values[i] >= threshold ? 1 : 0;
  return out;
}

std::vector<std::uint16_t> quantize16(const ProbabilityMap& map) {
  std::vector<std::uint16_t> out(map.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint16_t>(std::lround(std::clamp(map.values[i], 0.0, 1.0) * 65535.0));
  }
  return out;
}

void save_probability_map(const ProbabilityMap& map, const fs::path& png, const fs::path& sidecar,
                          const std::string& provenance_json) {
  std::vector<std::uint16_t> levels = quantize16(map);
  cv::Mat img(map.height, map.width, CV_16U, levels.data());
  if (!png.parent_path().empty()) fs::create_directories(png.parent_path());
  if (!cv::imwrite(png.string(), img)) throw Error(ErrorKind::kIo, "cannot write " + png.string());
  std::ofstream out(sidecar);
  out << provenance_json << "\n";
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + sidecar.string());
}

std::vector<std::uint16_t> load_probability_levels(const fs::path& png, FrameSize* size) {
  cv::Mat img = cv::imread(png.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw_data("cannot read probability map " + png.string());
  if (img.type() != CV_16U) throw_data(png.string() + " is not a 16-bit single-channel map");
  if (size != nullptr) *size = {img.rows, img.cols};
  std::vector<std::uint16_t> levels(img.total());
  for (int r = 0; r < img.rows; ++r) {
    std::copy_n(img.ptr<std::uint16_t>(r), img.cols, levels.begin() + static_cast<std::ptrdiff_t>(r) * img.cols);
  }
  return levels;
}

ProbabilityMap load_probability_map(const fs::path& png) {
  FrameSize size;
  const std::vector<std::uint16_t> levels = load_probability_levels(png, &size);
  ProbabilityMap map;
  map.height = size.height;
  map.width = size.width;
  map.values.resize(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) map.values[i] = levels[i] / 65535.0;
  return map;
}

}  // namespace lgunet
