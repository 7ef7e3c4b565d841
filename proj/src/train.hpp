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
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "fusion.hpp"

namespace lgunet {

struct EpochRecord {
  int epoch = 0;
  Stage stage = Stage::kPretrainGlobal;
  double lr = 0.0;  // learning rate of the epoch's first step
  double loss = 0.0;
  std::optional<double> val_aupr;
};

struct StageReport {
  Stage stage = Stage::kPretrainGlobal;
  std::filesystem::path checkpoint;
  std::vector<EpochRecord> epochs;
  std::int64_t steps = 0;
};

// Names of the parameters a stage may update.
std::set<std::string> freeze_mask(FusedModel& model, Stage stage);
std::vector<Stage> prerequisites(Stage stage);
std::filesystem::path checkpoint_path(const RunConfig& cfg, Stage stage);

// Builds the model state a stage starts from: fresh initialisation for
// pretrain_global, otherwise the predecessor checkpoint. Throws a
// prerequisite error naming every missing checkpoint.
void prepare_stage_model(FusedModel& model, Stage stage, const RunConfig& cfg);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Runs one training stage end to end and writes its checkpoint, the per-epoch
// CSV log (run_dir/metrics.csv) and the resolved config.
StageReport run_stage(Stage stage, const DatasetManifest& manifest, const RunConfig& cfg,
                      const EpochCallback& on_epoch = {});

// Splits the manifest's training ids into (train, validation).
std::pair<std::vector<std::string>, std::vector<std::string>> validation_split(
    const DatasetManifest& manifest, const RunConfig& cfg);

}  // namespace lgunet
