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
#include <map>
#include <set>
#include <string>
#include <vector>

#include "data.hpp"
#include "fusion.hpp"
#include "loss.hpp"

namespace lgunet {

enum class Stage { kPretrainGlobal, kPretrainLocal, kFuseHead, kFinetuneAll };

inline constexpr Stage kAllStages[] = {Stage::kPretrainGlobal, Stage::kPretrainLocal,
                                       Stage::kFuseHead, Stage::kFinetuneAll};

std::string to_string(Stage stage);
// Accepts both the canonical names (pretrain_global, ...) and the CLI aliases
// (global, local, fuse-head, finetune).
Stage parse_stage(const std::string& text);

struct StageSettings {
  double lr = 2e-4;
  int epochs = 60;
  int batch = 8;
};

struct StreamSettings {
  int depth = 3;
  int base_channels = 32;
};

// Fully resolved run configuration. Values start from the per-class defaults;
// every key set explicitly is remembered as an override.
struct RunConfig {
  LesionClass lesion_class = LesionClass::kEX;
  std::uint64_t seed = 0;       // weight initialisation
  std::uint64_t data_seed = 0;  // shuffling and augmentation
  Geometry geometry;
  StreamSettings global_net;
  StreamSettings local_net;
  int head_width = 64;
  LossWeights loss;
  ClassBalance balance;
  double lr_power = 0.9;
  StageSettings stages[4];
  int patience = 10;
  double val_fraction = 0.2;
  double positive_sampling = 0.0;
  int max_steps = 0;  // per stage, 0 = no cap
  AugmentSpec augment;
  int infer_batch = 16;
  std::string data_root = "data";
  std::string run_dir = "run";

  std::set<std::string> overrides;

  static RunConfig defaults(LesionClass lesion);

  StageSettings& stage(Stage s) { return stages[static_cast<int>(s)]; }
  const StageSettings& stage(Stage s) const { return stages[static_cast<int>(s)]; }

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Throws on any inconsistency, before any compute is spent.
  void validate() const;
  FusedConfig model_config() const;
  // Hash of everything that determines parameter shapes and geometry.
  std::string fingerprint() const;
  // TOML-style text; overridden keys are annotated.
  std::string to_text() const;
};

// Parses `key = value` lines with optional [section] headers; keys are
// flattened to section.key. Comments start with '#'.
std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                 const std::string& origin = "<text>");
RunConfig config_from_text(const std::string& text, const std::string& origin = "<text>");
RunConfig load_config(const std::filesystem::path& path);
// LGUNET_DATA_ROOT, when set, replaces paths.data_root.
void apply_environment(RunConfig& cfg);

}  // namespace lgunet
