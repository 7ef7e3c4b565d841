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

#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "error.hpp"
#include "json.hpp"
#include "layers.hpp"

namespace lgunet {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(LesionClass c) {
  switch (c) {
    case LesionClass::kEX: return "EX";
    case LesionClass::kMA: return "MA";
    case LesionClass::kHE: return "HE";
    case LesionClass::kSE: return "SE";
  }
  return "?";
}

LesionClass parse_lesion_class(const std::string& text) {
  if (text == "EX") return LesionClass::kEX;
  if (text == "MA") return LesionClass::kMA;
  if (text == "HE") return LesionClass::kHE;
  if (text == "SE") return LesionClass::kSE;
  throw_invalid("unknown lesion class '" + text + "' (expected EX, MA, HE or SE)");
}

void Geometry::validate() const {
  require(patch > 0, "patch size must be positive");
  require(frame.height > 0 && frame.width > 0 && global.height > 0 && global.width > 0,
          "frame sizes must be positive");
  require(frame.height <= source.height && frame.width <= source.width,
          "cropped frame " + frame.str() + " exceeds source " + source.str());
  require(frame.height % patch == 0 && frame.width % patch == 0,
          "frame " + frame.str() + " is not divisible by patch size " + std::to_string(patch));
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Geometry helpers

std::pair<int, int> center_crop_offsets(FrameSize source, FrameSize target) {
  if (source.height < target.height || source.width < target.width) {
    throw_data("image " + source.str() + " is smaller than the crop target " + target.str());
  }
  return {(source.height - target.height) / 2, (source.width - target.width) / 2};
}

Sample center_crop(const Sample& sample, FrameSize target) {
  const auto [top, left] = center_crop_offsets(sample.size(), target);
  const cv::Rect roi(left, top, target.width, target.height);
  Sample out;
  out.id = sample.id;
  out.image = sample.image(roi).clone();
  if (!sample.mask.empty()) out.mask = sample.mask(roi).clone();
  return out;
}

cv::Mat uncrop(const cv::Mat& frame_map, FrameSize source) {
  const auto [top, left] =
      center_crop_offsets(source, {frame_map.rows, frame_map.cols});
  cv::Mat out = cv::Mat::zeros(source.height, source.width, frame_map.type());
  frame_map.copyTo(out(cv::Rect(left, top, frame_map.cols, frame_map.rows)));
  return out;
}

cv::Mat downsample_mask_fraction(const cv::Mat& mask, FrameSize size) {
  cv::Mat as_double;
  mask.convertTo(as_double, CV_64F);
  cv::Mat out;
  cv::resize(as_double, out, cv::Size(size.width, size.height), 0, 0, cv::INTER_AREA);
  return out;
}

Sample make_global_input(const Sample& sample, FrameSize size) {
  Sample out;
  out.id = sample.id;
  cv::resize(sample.image, out.image, cv::Size(size.width, size.height), 0, 0, cv::INTER_AREA);
  if (!sample.mask.empty()) {
    const cv::Mat fraction = downsample_mask_fraction(sample.mask, size);
    out.mask = cv::Mat(fraction.size(), CV_8U);
    for (int r = 0; r < fraction.rows; ++r) {
      const double* src = fraction.ptr<double>(r);
      std::uint8_t* dst = out.mask.ptr<std::uint8_t>(r);
      for (int c = 0; c < fraction.cols; ++c) dst[c] = src[c] >= 0.5 ? 1 : 0;
    }
  }
  return out;
}

std::vector<PatchWindow> patch_grid(FrameSize frame, int size) {
  require(size > 0, "patch size must be positive");
  require(frame.height > 0 && frame.width > 0 && frame.height % size == 0 && frame.width % size == 0,
          "frame " + frame.str() + " is not divisible by patch size " + std::to_string(size));
  std::vector<PatchWindow> grid;
  const int rows = frame.height / size;
  const int cols = frame.width / size;
  grid.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) grid.push_back({r, c, r * size, c * size, size, frame});
  }
  return grid;
}

Sample extract_patch(const Sample& frame_sample, const PatchWindow& window) {
  require(frame_sample.size() == window.frame, "extract_patch: sample is not in the window's frame");
  const cv::Rect roi(window.left, window.top, window.size, window.size);
  Sample out;
  out.id = frame_sample.id;
  out.image = frame_sample.image(roi).clone();
  if (!frame_sample.mask.empty()) out.mask = frame_sample.mask(roi).clone();
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentSpec AugmentSpec::aligned(std::uint64_t seed) {
  AugmentSpec s;
  s.mode = AugmentMode::kAligned;
  s.zoom_min = s.zoom_max = 1.0;
  s.noise_max = 0.0;
  s.seed = seed;
  return s;
}

AugmentSpec AugmentSpec::identity() {
  AugmentSpec s;
  s.rotation_max_deg = 0.0;
  s.zoom_min = s.zoom_max = 1.0;
  s.flip_horizontal = s.flip_vertical = false;
  s.noise_max = 0.0;
  return s;
}

AugmentTransform draw_transform(const AugmentSpec& spec) {
  require(spec.zoom_min > 0 && spec.zoom_min <= spec.zoom_max, "augment: invalid zoom range");
  require(spec.rotation_max_deg >= 0 && spec.noise_max >= 0, "augment: negative range");
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentTransform t;
  t.mode = spec.mode;
  if (spec.mode == AugmentMode::kAligned) {
    t.quarter_turns = static_cast<int>(rng() % 4);
    t.angle_deg = 90.0 * t.quarter_turns;
  } else {
    t.angle_deg = spec.rotation_max_deg * unit(rng);
    t.zoom = spec.zoom_min + (spec.zoom_max - spec.zoom_min) * unit(rng);
  }
  t.flip_horizontal = spec.flip_horizontal && unit(rng) < 0.5;
  t.flip_vertical = spec.flip_vertical && unit(rng) < 0.5;
  t.noise_sigma = spec.noise_max * unit(rng);
  t.noise_seed = rng();
  return t;
}

namespace {

// Quarter-turn rotation (clockwise) that keeps the frame size by center
// cropping/padding; exact index permutation, no resampling.
cv::Mat rotate_quarter(const cv::Mat& src, int turns) {
  turns = ((turns % 4) + 4) % 4;
  if (turns == 0) return src.clone();
  cv::Mat rotated;
  const int code = turns == 1 ? cv::ROTATE_90_CLOCKWISE
                   : turns == 2 ? cv::ROTATE_180
                                : cv::ROTATE_90_COUNTERCLOCKWISE;
  cv::rotate(src, rotated, code);
  if (rotated.size() == src.size()) return rotated;
  cv::Mat out = cv::Mat::zeros(src.size(), src.type());
  const int oy = (rotated.rows - src.rows) / 2;
  const int ox = (rotated.cols - src.cols) / 2;
  const int y0 = std::max(0, -oy);
  const int x0 = std::max(0, -ox);
  const int y1 = std::min(src.rows, rotated.rows - oy);
  const int x1 = std::min(src.cols, rotated.cols - ox);
  const cv::Rect dst_roi(x0, y0, x1 - x0, y1 - y0);
  const cv::Rect src_roi(x0 + ox, y0 + oy, x1 - x0, y1 - y0);
  rotated(src_roi).copyTo(out(dst_roi));
  return out;
}

}  // namespace

cv::Mat apply_geometry(const cv::Mat& raster, const AugmentTransform& t, bool nearest) {
  cv::Mat out = raster.clone();
  if (t.flip_horizontal) cv::flip(out, out, 1);
  if (t.flip_vertical) cv::flip(out, out, 0);
  if (t.mode == AugmentMode::kAligned) return rotate_quarter(out, t.quarter_turns);
  if (t.angle_deg == 0.0 && t.zoom == 1.0) return out;
  const cv::Point2f center(static_cast<float>((out.cols - 1) / 2.0),
                           static_cast<float>((out.rows - 1) / 2.0));
  const cv::Mat m = cv::getRotationMatrix2D(center, t.angle_deg, t.zoom);
  cv::Mat warped;
  cv::warpAffine(out, warped, m, out.size(), nearest ? cv::INTER_NEAREST : cv::INTER_LINEAR,
                 cv::BORDER_CONSTANT, cv::Scalar::all(0));
  return warped;
}

Sample augment(const Sample& sample, const AugmentSpec& spec) {
  const AugmentTransform t = draw_transform(spec);
  Sample out;
  out.id = sample.id;
  out.image = apply_geometry(sample.image, t, false);
  if (!sample.mask.empty()) out.mask = apply_geometry(sample.mask, t, true);
  if (t.noise_sigma > 0.0) {
    Rng rng(t.noise_seed);
    std::normal_distribution<double> normal(0.0, t.noise_sigma * 255.0);
    cv::Mat noisy(out.image.size(), out.image.type());
    const int values = out.image.cols * out.image.channels();
    for (int r = 0; r < out.image.rows; ++r) {
      const std::uint8_t* src = out.image.ptr<std::uint8_t>(r);
      std::uint8_t* dst = noisy.ptr<std::uint8_t>(r);
      for (int c = 0; c < values; ++c) dst[c] = cv::saturate_cast<std::uint8_t>(src[c] + normal(rng));
    }
    out.image = noisy;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tensors

void image_to_tensor(const cv::Mat& image, Tensor& out, int index) {
  require(image.type() == CV_8UC3, "image_to_tensor expects an 8-bit 3-channel image");
  require(out.c() == 3 && out.h() == image.rows && out.w() == image.cols,
          "image_to_tensor: tensor " + out.shape_string() + " does not fit the image");
  for (int r = 0; r < image.rows; ++r) {
    const std::uint8_t* src = image.ptr<std::uint8_t>(r);
    for (int c = 0; c < image.cols; ++c) {
      for (int ch = 0; ch < 3; ++ch) out.at(index, ch, r, c) = src[3 * c + ch] / 255.0;
    }
  }
}

Tensor image_to_tensor(const cv::Mat& image) {
  Tensor t(1, 3, image.rows, image.cols);
  image_to_tensor(image, t, 0);
  return t;
}

void append_labels(const cv::Mat& mask, std::vector<std::uint8_t>& out) {
  require(mask.type() == CV_8U, "labels must be an 8-bit single-channel mask");
  for (int r = 0; r < mask.rows; ++r) {
    const std::uint8_t* src = mask.ptr<std::uint8_t>(r);
    out.insert(out.end(), src, src + mask.cols);
  }
}

// ---------------------------------------------------------------------------
// Dataset layout

fs::path DatasetManifest::mask_path(const std::string& id) const {
  return root / "masks" / to_string(lesion_class) / (id + ".png");
}

fs::path DatasetManifest::split_path() const {
  return root / "splits" / (to_string(lesion_class) + ".json");
}

fs::path DatasetManifest::image_path(const std::string& id) const {
  for (const char* ext : {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".JPG", ".PNG"}) {
    fs::path p = root / "images" / (id + ext);
    if (fs::exists(p)) return p;
  }
  throw_data("missing image file for id '" + id + "': " + (root / "images" / (id + ".png")).string() +
             " (or .jpg/.tif)");
}

DatasetManifest load_manifest(const fs::path& root, LesionClass lesion, const Geometry& geometry) {
  geometry.validate();
  DatasetManifest m;
  m.root = root;
  m.lesion_class = lesion;
  m.geometry = geometry;
  const fs::path split = m.split_path();
  std::ifstream in(split);
  if (!in) throw_data("missing split file " + split.string());
  json j;
  try {
    in >> j;
    m.train_ids = j.at("train").get<std::vector<std::string>>();
    m.test_ids = j.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw_data("malformed split file " + split.string() + ": " + e.what());
  }
  std::set<std::string> seen;
  for (const auto* ids : {&m.train_ids, &m.test_ids}) {
    for (const std::string& id : *ids) {
      if (!seen.insert(id).second) throw_data("duplicate id '" + id + "' in " + split.string());
      m.image_path(id);
      if (!fs::exists(m.mask_path(id))) {
        throw_data("missing mask file for id '" + id + "': " + m.mask_path(id).string());
      }
    }
  }
  return m;
}

void write_split(const DatasetManifest& manifest) {
  fs::create_directories(manifest.split_path().parent_path());
  json j;
  j["train"] = manifest.train_ids;
  j["test"] = manifest.test_ids;
  std::ofstream out(manifest.split_path());
  out << j.dump(2) << "\n";
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + manifest.split_path().string());
}

Sample load_sample(const DatasetManifest& manifest, const std::string& id) {
  Sample s;
  s.id = id;
  const fs::path image_path = manifest.image_path(id);
  s.image = cv::imread(image_path.string(), cv::IMREAD_COLOR);
  if (s.image.empty()) throw_data("cannot decode image " + image_path.string());
  const fs::path mask_path = manifest.mask_path(id);
  if (!fs::exists(mask_path)) throw_data("missing mask file for id '" + id + "': " + mask_path.string());
  cv::Mat raw = cv::imread(mask_path.string(), cv::IMREAD_GRAYSCALE);
  if (raw.empty()) throw_data("cannot decode mask " + mask_path.string());
  if (raw.size() != s.image.size()) {
    throw_data("mask " + mask_path.string() + " does not match its image size");
  }
  cv::threshold(raw, s.mask, 127, 1, cv::THRESH_BINARY);
  return s;
}

Sample load_frame(const DatasetManifest& manifest, const std::string& id) {
  return center_crop(load_sample(manifest, id), manifest.geometry.frame);
}

// ---------------------------------------------------------------------------
// Synthetic data

SynthKind parse_synth_kind(const std::string& text) {
  if (text == "scattered") return SynthKind::kScattered;
  if (text == "compact") return SynthKind::kCompact;
  throw_invalid("unknown synthetic kind '" + text + "' (expected scattered or compact)");
}

std::string to_string(SynthKind kind) {
  return kind == SynthKind::kScattered ? "scattered" : "compact";
}

Sample synth_sample(SynthKind kind, const Geometry& geometry, std::uint64_t seed,
                    const std::string& id) {
  geometry.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const int h = geometry.source.height;
  const int w = geometry.source.width;
  const double scale = static_cast<double>(geometry.frame.height) / 2816.0;
  const cv::Point2d center(w / 2.0, h / 2.0);
  const double radius = 0.52 * geometry.frame.height;

  // Smooth retina-coloured background: low-frequency noise upsampled.
  cv::Mat low(6, 8, CV_32FC3);
  for (int r = 0; r < low.rows; ++r) {
    for (int c = 0; c < low.cols; ++c) {
      low.at<cv::Vec3f>(r, c) = cv::Vec3f(static_cast<float>(uniform(-12, 12)),
                                          static_cast<float>(uniform(-15, 15)),
                                          static_cast<float>(uniform(-20, 20)));
    }
  }
  cv::Mat texture;
  cv::resize(low, texture, cv::Size(w, h), 0, 0, cv::INTER_CUBIC);

  cv::Mat image(h, w, CV_8UC3, cv::Scalar::all(0));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double d = std::hypot(r - center.y, c - center.x) / radius;
      if (d > 1.0) continue;
      const double shade = 1.0 - 0.35 * d * d;
      const cv::Vec3f t = texture.at<cv::Vec3f>(r, c);
      image.at<cv::Vec3b>(r, c) = cv::Vec3b(cv::saturate_cast<std::uint8_t>(30 * shade + t[0]),
                                            cv::saturate_cast<std::uint8_t>(75 * shade + t[1]),
                                            cv::saturate_cast<std::uint8_t>(165 * shade + t[2]));
    }
  }
  cv::Mat disc_mask = cv::Mat::zeros(h, w, CV_8U);
  cv::circle(disc_mask, cv::Point(cvRound(center.x), cvRound(center.y)), cvRound(radius),
             cv::Scalar(1), cv::FILLED, cv::LINE_8);

  // Optic disc (pale) and a few dark vessels radiating from it.
  const cv::Point disc(cvRound(center.x + uniform(0.35, 0.5) * radius * (unit(rng) < 0.5 ? -1 : 1)),
                       cvRound(center.y + uniform(-0.1, 0.1) * radius));
  const int disc_r = std::max(2, cvRound(0.09 * geometry.frame.height));
  cv::circle(image, disc, disc_r, cv::Scalar(150, 190, 225), cv::FILLED, cv::LINE_AA);
  const int n_vessels = 6 + static_cast<int>(rng() % 4);
  for (int v = 0; v < n_vessels; ++v) {
    std::vector<cv::Point> pts;
    double angle = uniform(0, 2 * CV_PI);
    cv::Point2d p(disc.x, disc.y);
    const double step = std::max(2.0, 0.03 * geometry.frame.height);
    for (int k = 0; k < 30; ++k) {
      pts.emplace_back(cvRound(p.x), cvRound(p.y));
      angle += uniform(-0.25, 0.25);
      p += cv::Point2d(std::cos(angle), std::sin(angle)) * step;
    }
    const int thickness = std::max(1, cvRound(uniform(4, 14) * scale));
    cv::polylines(image, pts, false, cv::Scalar(25, 35, 110), thickness, cv::LINE_AA);
  }

  // Lesions: filled, hard-edged blobs fully inside the disc and the crop.
  const auto [crop_top, crop_left] = center_crop_offsets(geometry.source, geometry.frame);
  cv::Mat mask = cv::Mat::zeros(h, w, CV_8U);
  const bool scattered = kind == SynthKind::kScattered;
  const int n_blobs = scattered ? 30 + static_cast<int>(rng() % 31) : 2 + static_cast<int>(rng() % 3);
  const cv::Scalar color = scattered ? cv::Scalar(70, 215, 235) : cv::Scalar(25, 20, 95);
  int placed = 0;
  for (int attempt = 0; placed < n_blobs && attempt < 1000 * n_blobs; ++attempt) {
    const double diameter = (scattered ? uniform(2.0, 10.0) : uniform(100.0, 400.0)) * scale;
    const int rad = std::max(1, cvRound(diameter / 2.0));
    const int cy = crop_top + rad + static_cast<int>(rng() % std::max(1, geometry.frame.height - 2 * rad));
    const int cx = crop_left + rad + static_cast<int>(rng() % std::max(1, geometry.frame.width - 2 * rad));
    if (std::hypot(cy - center.y, cx - center.x) + rad > 0.92 * radius) continue;
    const cv::Size axes(rad, std::max(1, cvRound(rad * uniform(0.7, 1.0))));
    const double tilt = uniform(0, 180);
    cv::ellipse(mask, cv::Point(cx, cy), axes, tilt, 0, 360, cv::Scalar(1), cv::FILLED, cv::LINE_8);
    ++placed;
  }
  if (placed == 0) {
    // Guarantee a positive pixel even for degenerate geometries.
    mask.at<std::uint8_t>(cvRound(center.y), cvRound(center.x)) = 1;
  }
  cv::bitwise_and(mask, disc_mask, mask);
  std::normal_distribution<double> jitter(0.0, 4.0);
  for (int r = 0; r < h; ++r) {
    const std::uint8_t* m = mask.ptr<std::uint8_t>(r);
    cv::Vec3b* px = image.ptr<cv::Vec3b>(r);
    for (int c = 0; c < w; ++c) {
      if (!m[c]) continue;
      for (int ch = 0; ch < 3; ++ch) px[c][ch] = cv::saturate_cast<std::uint8_t>(color[ch] + jitter(rng));
    }
  }
  Sample s;
  s.id = id;
  s.image = image;
  s.mask = mask;
  return s;
}

DatasetManifest synth_dataset(SynthKind kind, int n_images, int n_test, const Geometry& geometry,
                              std::uint64_t seed, LesionClass lesion, const fs::path& out_dir) {
  require(n_images >= 1, "synth: need at least one image");
  require(n_test >= 0 && n_test <= n_images, "synth: test count must be in [0, n]");
  geometry.validate();
  DatasetManifest m;
  m.root = out_dir;
  m.lesion_class = lesion;
  m.geometry = geometry;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks" / to_string(lesion));
  for (int i = 0; i < n_images; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%03d", i);
    const std::string id = buf;
    const Sample s = synth_sample(kind, geometry, mix_seed(seed, static_cast<std::uint64_t>(i)), id);
    cv::Mat mask255 = s.mask * 255;
    if (!cv::imwrite((out_dir / "images" / (id + ".png")).string(), s.image) ||
        !cv::imwrite(m.mask_path(id).string(), mask255)) {
      throw Error(ErrorKind::kIo, "cannot write synthetic sample " + id + " under " + out_dir.string());
    }
    (i < n_images - n_test ? m.train_ids : m.test_ids).push_back(id);
  }
  write_split(m);
  return m;
}

}  // namespace lgunet
