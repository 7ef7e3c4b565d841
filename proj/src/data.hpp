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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "geometry.hpp"
#include "tensor.hpp"

namespace lgunet {

enum class LesionClass { kEX, kMA, kHE, kSE };

std::string to_string(LesionClass c);
LesionClass parse_lesion_class(const std::string& text);

// Frame sizes used by the pipeline: the source photograph, the center-cropped
// full-resolution frame, the downsampled global input, and the patch edge.
struct Geometry {
  FrameSize source{2848, 4288};
  FrameSize frame{2816, 3328};
  FrameSize global{640, 640};
  int patch = 256;

  static Geometry full() { return {}; }
  // 1/8-scale stand-in that keeps the 11 x 13 patch grid.
  static Geometry desk() { return {{356, 536}, {352, 416}, {80, 80}, 32}; }

  bool operator==(const Geometry&) const = default;
  void validate() const;
  int grid_rows() const { return frame.height / patch; }
  int grid_cols() const { return frame.width / patch; }
};

// One photograph with the binary mask of a single lesion class. The image is
// 8-bit, 3 channels (OpenCV BGR order); the mask is 8-bit with values {0, 1}.
struct Sample {
  cv::Mat image;
  cv::Mat mask;
  std::string id;

  FrameSize size() const { return {image.rows, image.cols}; }
};

Sample center_crop(const Sample& sample, FrameSize target);
// Offsets (top, left) used by center_crop.
std::pair<int, int> center_crop_offsets(FrameSize source, FrameSize target);
// Zero-filled inverse of center_crop for a single-channel map.
cv::Mat uncrop(const cv::Mat& frame_map, FrameSize source);

// Area-interpolated image; mask averaged over each target cell then
// re-binarized at >= 0.5.
Sample make_global_input(const Sample& sample, FrameSize size);
// Area-averaged (not yet binarized) mask, CV_64F.
cv::Mat downsample_mask_fraction(const cv::Mat& mask, FrameSize size);

// Non-overlapping row-major grid; the frame must be divisible by `size`.
std::vector<PatchWindow> patch_grid(FrameSize frame, int size);
Sample extract_patch(const Sample& frame_sample, const PatchWindow& window);

enum class AugmentMode { kFree, kAligned };

struct AugmentSpec {
  AugmentMode mode = AugmentMode::kFree;
  double rotation_max_deg = 359.0;
  double zoom_min = 0.9;
  double zoom_max = 1.1;
  bool flip_horizontal = true;
  bool flip_vertical = true;
  double noise_max = 0.02;  // Gaussian sigma upper bound, fraction of 255
  std::uint64_t seed = 0;

  static AugmentSpec aligned(std::uint64_t seed);
  static AugmentSpec identity();
};

// A concrete draw from an AugmentSpec.
struct AugmentTransform {
  AugmentMode mode = AugmentMode::kFree;
  double angle_deg = 0.0;  // free mode: any angle; aligned mode: quarter turns
  int quarter_turns = 0;
  double zoom = 1.0;
  bool flip_horizontal = false;
  bool flip_vertical = false;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

AugmentTransform draw_transform(const AugmentSpec& spec);
// Applies only the geometric part. Masks (and index rasters) use nearest
// neighbour sampling, images bilinear; uncovered pixels become 0.
cv::Mat apply_geometry(const cv::Mat& raster, const AugmentTransform& t, bool nearest);
Sample augment(const Sample& sample, const AugmentSpec& spec);

// Pixel tensors: image bytes scaled to [0, 1].
void image_to_tensor(const cv::Mat& image, Tensor& out, int index);
Tensor image_to_tensor(const cv::Mat& image);
// Appends the mask's 0/1 values in row-major order.
void append_labels(const cv::Mat& mask, std::vector<std::uint8_t>& out);

struct DatasetManifest {
  std::filesystem::path root;
  LesionClass lesion_class = LesionClass::kEX;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  Geometry geometry;

  std::filesystem::path mask_path(const std::string& id) const;
  std::filesystem::path split_path() const;
  // Resolves root/images/<id>.<ext>; throws a data error naming the file.
  std::filesystem::path image_path(const std::string& id) const;
};

DatasetManifest load_manifest(const std::filesystem::path& root, LesionClass lesion,
                              const Geometry& geometry);
void write_split(const DatasetManifest& manifest);
// Loads the raw (uncropped) photograph and mask.
Sample load_sample(const DatasetManifest& manifest, const std::string& id);
// load_sample followed by center_crop to the manifest frame.
Sample load_frame(const DatasetManifest& manifest, const std::string& id);

enum class SynthKind { kScattered, kCompact };

SynthKind parse_synth_kind(const std::string& text);
std::string to_string(SynthKind kind);

// One synthetic fundus photograph at the geometry's source size, with an exact
// lesion mask. Deterministic in (kind, geometry, seed).
Sample synth_sample(SynthKind kind, const Geometry& geometry, std::uint64_t seed,
                    const std::string& id);

// Writes a dataset in the standard layout under `out_dir`.
DatasetManifest synth_dataset(SynthKind kind, int n_images, int n_test, const Geometry& geometry,
                              std::uint64_t seed, LesionClass lesion,
                              const std::filesystem::path& out_dir);

// Deterministic 64-bit mixing of seeds (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace lgunet
