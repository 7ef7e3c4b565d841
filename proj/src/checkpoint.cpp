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

#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "error.hpp"
#include "json.hpp"

namespace lgunet {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'L', 'G', 'U', 'N', 'E', 'T', 'C', 'K'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& origin) {
  if (pos + sizeof(T) > in.size()) throw_data("truncated checkpoint " + origin);
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

json directory(const std::vector<NamedTensor>& tensors) {
  json arr = json::array();
  for (const NamedTensor& t : tensors) {
    arr.push_back({{"name", t.name}, {"shape", {t.value.n(), t.value.c(), t.value.h(), t.value.w()}}});
  }
  return arr;
}

std::vector<NamedTensor> read_group(const json& dir, const std::string& bytes, std::size_t& pos,
                                    const std::string& origin) {
  std::vector<NamedTensor> out;
  for (const json& entry : dir) {
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 4) throw_data("bad tensor shape in checkpoint " + origin);
    NamedTensor t{entry.at("name").get<std::string>(), Tensor(shape[0], shape[1], shape[2], shape[3])};
    const std::size_t n = t.value.size() * sizeof(double);
    if (pos + n > bytes.size()) throw_data("truncated checkpoint payload " + origin);
    std::memcpy(t.value.data(), bytes.data() + pos, n);
    pos += n;
    out.push_back(std::move(t));
  }
  return out;
}

void write_group(std::string& out, const std::vector<NamedTensor>& tensors) {
  for (const NamedTensor& t : tensors) {
    out.append(reinterpret_cast<const char*>(t.value.data()), t.value.size() * sizeof(double));
  }
}

}  // namespace

Checkpoint capture(FusedModel& model, Stage stage, const RunConfig& cfg, Adam* optimizer) {
  Checkpoint ck;
  ck.stage = stage;
  ck.fingerprint = cfg.fingerprint();
  ck.config_text = cfg.to_text();
  for (Parameter* p : model.parameters()) ck.parameters.push_back({p->name, p->value});
  for (const Buffer& b : model.buffers()) ck.buffers.push_back({b.name, *b.value});
  if (optimizer != nullptr) {
    ck.optimizer_steps = optimizer->steps();
    for (std::size_t k = 0; k < optimizer->params().size(); ++k) {
      ck.adam_m.push_back({optimizer->params()[k]->name, optimizer->first_moments()[k]});
      ck.adam_v.push_back({optimizer->params()[k]->name, optimizer->second_moments()[k]});
    }
  }
  return ck;
}

void restore(FusedModel& model, const Checkpoint& checkpoint) {
  std::map<std::string, const Tensor*> params;
  for (const NamedTensor& t : checkpoint.parameters) params[t.name] = &t.value;
  std::map<std::string, const Tensor*> buffers;
  for (const NamedTensor& t : checkpoint.buffers) buffers[t.name] = &t.value;
  for (Parameter* p : model.parameters()) {
    auto it = params.find(p->name);
    if (it == params.end()) throw_data("checkpoint lacks parameter " + p->name);
    if (!it->second->same_shape(p->value)) throw_data("checkpoint shape mismatch for " + p->name);
    p->value = *it->second;
  }
  for (const Buffer& b : model.buffers()) {
    auto it = buffers.find(b.name);
    if (it == buffers.end()) throw_data("checkpoint lacks buffer " + b.name);
    if (!it->second->same_shape(*b.value)) throw_data("checkpoint shape mismatch for " + b.name);
    *b.value = *it->second;
  }
}

std::string serialize(const Checkpoint& ck) {
  json header;
  header["stage"] = to_string(ck.stage);
  header["fingerprint"] = ck.fingerprint;
  header["config"] = ck.config_text;
  header["parameters"] = directory(ck.parameters);
  header["buffers"] = directory(ck.buffers);
  header["optimizer"] = {{"steps", ck.optimizer_steps}, {"m", directory(ck.adam_m)}, {"v", directory(ck.adam_v)}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, ck.version);
  put<std::uint64_t>(out, text.size());
  out += text;
  write_group(out, ck.parameters);
  write_group(out, ck.buffers);
  write_group(out, ck.adam_m);
  write_group(out, ck.adam_v);
  return out;
}

Checkpoint deserialize(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw_data(origin + " is not a checkpoint file");
  }
  std::size_t pos = sizeof(kMagic);
  Checkpoint ck;
  ck.version = take<std::uint32_t>(bytes, pos, origin);
  if (ck.version != kCheckpointVersion) {
    throw_data(origin + ": unsupported checkpoint version " + std::to_string(ck.version));
  }
  const auto header_len = take<std::uint64_t>(bytes, pos, origin);
  if (pos + header_len > bytes.size()) throw_data("truncated checkpoint header " + origin);
  try {
    const json header = json::parse(bytes.substr(pos, header_len));
    pos += header_len;
    ck.stage = parse_stage(header.at("stage").get<std::string>());
    ck.fingerprint = header.at("fingerprint").get<std::string>();
    ck.config_text = header.at("config").get<std::string>();
    ck.parameters = read_group(header.at("parameters"), bytes, pos, origin);
    ck.buffers = read_group(header.at("buffers"), bytes, pos, origin);
    const json& opt = header.at("optimizer");
    ck.optimizer_steps = opt.at("steps").get<std::int64_t>();
    ck.adam_m = read_group(opt.at("m"), bytes, pos, origin);
    ck.adam_v = read_group(opt.at("v"), bytes, pos, origin);
  } catch (const json::exception& e) {
    throw_data("malformed checkpoint header in " + origin + ": " + e.what());
  }
  if (pos != bytes.size()) throw_data("trailing bytes in checkpoint " + origin);
  return ck;
}

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    const std::string bytes = serialize(checkpoint);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kPrerequisite, "missing checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str(), path.string());
}

Checkpoint load_checkpoint(const fs::path& path, const std::string& expected_fingerprint) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.fingerprint != expected_fingerprint) {
    throw_invalid("checkpoint " + path.string() + " has config fingerprint " + ck.fingerprint +
                  " but the run expects " + expected_fingerprint);
  }
  return ck;
}

}  // namespace lgunet
