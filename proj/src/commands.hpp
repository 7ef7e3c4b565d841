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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "fusion.hpp"
#include "infer.hpp"
#include "metrics.hpp"
#include "train.hpp"

namespace lgunet {

enum class Stream { kFused, kGlobal, kLocal };

std::string to_string(Stream stream);
Stream parse_stream(const std::string& text);

// A model rebuilt from the architecture recorded inside a checkpoint.
struct LoadedModel {
  std::unique_ptr<FusedModel> model;
  RunConfig config;  // as resolved when the checkpoint was written
  Stage stage = Stage::kPretrainGlobal;
  std::string fingerprint;
  std::filesystem::path path;
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

// Most advanced stage checkpoint present under cfg.run_dir.
std::filesystem::path latest_checkpoint(const RunConfig& cfg);

ProbabilityMap predict_frame(LoadedModel& loaded, const cv::Mat& frame_image, Stream stream, int batch);

void append_run_log(const std::filesystem::path& dir, const std::string& command,
                    const std::string& fingerprint, const std::string& details);

struct SynthRequest {
  SynthKind kind = SynthKind::kScattered;
  int n_images = 8;
  int n_test = 0;
  std::uint64_t seed = 0;
  LesionClass lesion_class = LesionClass::kMA;
  Geometry geometry = Geometry::desk();
  std::filesystem::path out;
};

DatasetManifest cmd_synth(const SynthRequest& request);

struct PrepareReport {
  DatasetManifest manifest;
  bool wrote_split = false;
  std::string summary;
};

// Validates a dataset tree against the configured geometry. When the split
// file is missing it is created from every image that has a mask for the
// class, holding out `test_fraction` of them (seeded by data_seed).
PrepareReport cmd_prepare(const RunConfig& cfg, std::optional<double> test_fraction);

StageReport cmd_train(Stage stage, const RunConfig& cfg, const EpochCallback& on_epoch = {});

struct EvalRow {
  Stream stream = Stream::kFused;
  LesionClass lesion_class = LesionClass::kEX;
  std::string split;
  std::size_t images = 0;
  double pooled_aupr = 0.0;
  std::optional<double> mean_image_aupr;  // over images with positives
  bool quantized = false;                 // pooled over 16-bit levels
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::pair<Stream, std::vector<ImageScore>>> per_image;
  std::string checkpoint;

  std::string table() const;
};

EvalReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                    const std::string& split, const std::vector<Stream>& streams);

struct InferRequest {
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> images;
  std::filesystem::path out;
  Stream stream = Stream::kFused;
};

// Writes out/<id>_<CLASS>.png and the JSON sidecar; returns the png paths.
std::vector<std::filesystem::path> cmd_infer(const RunConfig& cfg, const InferRequest& request);

struct CurvesRequest {
  std::filesystem::path predictions;
  std::filesystem::path out;
  std::string split = "test";
  Integration rule = Integration::kStep;
};

struct CurveResult {
  LesionClass lesion_class = LesionClass::kEX;
  std::size_t images = 0;
  PRCurve curve;
  std::filesystem::path csv;
  std::filesystem::path plot;
};

// Scores saved probability maps against the dataset masks, one pooled curve
// per class found in the prediction directory.
std::vector<CurveResult> cmd_curves(const RunConfig& cfg, const CurvesRequest& request);
std::string score_table(const std::vector<CurveResult>& results);

void render_pr_plot(const PRCurve& curve, const std::string& title, const std::filesystem::path& png);

}  // namespace lgunet
