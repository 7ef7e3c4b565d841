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
#include <string>
#include <vector>

#include "config.hpp"
#include "fusion.hpp"
#include "optim.hpp"

namespace lgunet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Serialized trainable state. On disk: the 8-byte magic "LGUNETCK", a u32
// format version, a u64 header length, a JSON header (stage, fingerprint,
// resolved config, tensor directory, optimizer step) and the raw
// little-endian f64 payload of every tensor in directory order.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  Stage stage = Stage::kPretrainGlobal;
  std::string fingerprint;
  std::string config_text;
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> buffers;
  std::int64_t optimizer_steps = 0;
  std::vector<NamedTensor> adam_m;  // named after their parameter
  std::vector<NamedTensor> adam_v;
};

Checkpoint capture(FusedModel& model, Stage stage, const RunConfig& cfg, Adam* optimizer);
// Copies parameters and buffers into `model`; names and shapes must match.
void restore(FusedModel& model, const Checkpoint& checkpoint);

std::string serialize(const Checkpoint& checkpoint);
Checkpoint deserialize(const std::string& bytes, const std::string& origin = "<memory>");

// Atomic: writes a temporary file next to `path` and renames it.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// load_checkpoint plus a fingerprint comparison against `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_fingerprint);

}  // namespace lgunet
