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

#include "config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <type_traits>

#include "error.hpp"

namespace lgunet {

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kPretrainGlobal: return "pretrain_global";
    case Stage::kPretrainLocal: return "pretrain_local";
    case Stage::kFuseHead: return "fuse_head";
    case Stage::kFinetuneAll: return "finetune_all";
  }
  return "?";
}

Stage parse_stage(const std::string& text) {
  if (text == "pretrain_global" || text == "global") return Stage::kPretrainGlobal;
  if (text == "pretrain_local" || text == "local") return Stage::kPretrainLocal;
  if (text == "fuse_head" || text == "fuse-head") return Stage::kFuseHead;
  if (text == "finetune_all" || text == "finetune") return Stage::kFinetuneAll;
  throw_invalid("unknown stage '" + text + "' (expected global, local, fuse-head or finetune)");
}

namespace {

int class_global_depth(LesionClass c) {
  switch (c) {
    case LesionClass::kEX: return 6;
    case LesionClass::kHE: return 6;
    case LesionClass::kSE: return 4;
    case LesionClass::kMA: return 3;
  }
  return 3;
}

int class_local_depth(LesionClass c) {
  return c == LesionClass::kEX || c == LesionClass::kMA ? 3 : 6;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  std::string s = os.str();
  // Prefer the shortest representation that round-trips.
  for (int p = 1; p <= 17; ++p) {
    std::ostringstream t;
    t << std::setprecision(p) << v;
    if (std::stod(t.str()) == v) return t.str();
  }
  return s;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw_invalid("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw_invalid("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw_invalid("config key '" + key + "': expected true or false, got '" + v + "'");
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool quoted = false;
};

#define LGU_INT_FIELD(expr)                                                              \
  Field{[](RunConfig& c, const std::string& k, const std::string& v) {                  \
          (expr) = static_cast<std::remove_reference_t<decltype(expr)>>(to_int(k, v));  \
        },                                                                               \
        [](const RunConfig& c) { return std::to_string(expr); }}
#define LGU_DOUBLE_FIELD(expr)                                                           \
  Field{[](RunConfig& c, const std::string& k, const std::string& v) {                  \
          (expr) = to_double(k, v);                                                      \
        },                                                                               \
        [](const RunConfig& c) { return format_double(expr); }}
#define LGU_BOOL_FIELD(expr)                                                             \
  Field{[](RunConfig& c, const std::string& k, const std::string& v) {                  \
          (expr) = to_bool(k, v);                                                        \
        },                                                                               \
        [](const RunConfig& c) { return std::string((expr) ? "true" : "false"); }}
#define LGU_STRING_FIELD(expr)                                                           \
  Field{[](RunConfig& c, const std::string&, const std::string& v) { (expr) = v; },     \
        [](const RunConfig& c) { return (expr); }, true}

using FieldTable = std::vector<std::pair<std::string, Field>>;

FieldTable make_fields() {
  FieldTable t;
  t.emplace_back("lesion_class",
                 Field{[](RunConfig& c, const std::string&, const std::string& v) {
                         c.lesion_class = parse_lesion_class(v);
                       },
                       [](const RunConfig& c) { return to_string(c.lesion_class); }, true});
  t.emplace_back("seed", LGU_INT_FIELD(c.seed));
  t.emplace_back("data_seed", LGU_INT_FIELD(c.data_seed));
  t.emplace_back("geometry.preset",
                 Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                         if (v == "full") c.geometry = Geometry::full();
                         else if (v == "desk") c.geometry = Geometry::desk();
                         else if (v != "custom") throw_invalid("config key '" + k + "': expected full, desk or custom");
                       },
                       [](const RunConfig& c) {
                         if (c.geometry == Geometry::desk()) return std::string("desk");
                         if (c.geometry == Geometry::full()) return std::string("full");
                         return std::string("custom");
                       },
                       true});
  t.emplace_back("geometry.source_height", LGU_INT_FIELD(c.geometry.source.height));
  t.emplace_back("geometry.source_width", LGU_INT_FIELD(c.geometry.source.width));
  t.emplace_back("geometry.frame_height", LGU_INT_FIELD(c.geometry.frame.height));
  t.emplace_back("geometry.frame_width", LGU_INT_FIELD(c.geometry.frame.width));
  t.emplace_back("geometry.global_height", LGU_INT_FIELD(c.geometry.global.height));
  t.emplace_back("geometry.global_width", LGU_INT_FIELD(c.geometry.global.width));
  t.emplace_back("geometry.patch", LGU_INT_FIELD(c.geometry.patch));
  t.emplace_back("global.depth", LGU_INT_FIELD(c.global_net.depth));
  t.emplace_back("global.base_channels", LGU_INT_FIELD(c.global_net.base_channels));
  t.emplace_back("local.depth", LGU_INT_FIELD(c.local_net.depth));
  t.emplace_back("local.base_channels", LGU_INT_FIELD(c.local_net.base_channels));
  t.emplace_back("head.width", LGU_INT_FIELD(c.head_width));
  t.emplace_back("loss.lambda1", LGU_DOUBLE_FIELD(c.loss.lambda1));
  t.emplace_back("loss.lambda2", LGU_DOUBLE_FIELD(c.loss.lambda2));
  t.emplace_back("loss.lambda3", LGU_DOUBLE_FIELD(c.loss.lambda3));
  t.emplace_back("loss.gamma", LGU_DOUBLE_FIELD(c.balance.gamma));
  t.emplace_back("schedule.power", LGU_DOUBLE_FIELD(c.lr_power));
  for (Stage s : kAllStages) {
    const int i = static_cast<int>(s);
    const std::string prefix = "stage." + to_string(s) + ".";
    t.emplace_back(prefix + "lr",
                   Field{[i](RunConfig& c, const std::string& k, const std::string& v) {
                           c.stages[i].lr = to_double(k, v);
                         },
                         [i](const RunConfig& c) { return format_double(c.stages[i].lr); }});
    t.emplace_back(prefix + "epochs",
                   Field{[i](RunConfig& c, const std::string& k, const std::string& v) {
                           c.stages[i].epochs = static_cast<int>(to_int(k, v));
                         },
                         [i](const RunConfig& c) { return std::to_string(c.stages[i].epochs); }});
    t.emplace_back(prefix + "batch",
                   Field{[i](RunConfig& c, const std::string& k, const std::string& v) {
                           c.stages[i].batch = static_cast<int>(to_int(k, v));
                         },
                         [i](const RunConfig& c) { return std::to_string(c.stages[i].batch); }});
  }
  t.emplace_back("train.patience", LGU_INT_FIELD(c.patience));
  t.emplace_back("train.val_fraction", LGU_DOUBLE_FIELD(c.val_fraction));
  t.emplace_back("train.positive_sampling", LGU_DOUBLE_FIELD(c.positive_sampling));
  t.emplace_back("train.max_steps", LGU_INT_FIELD(c.max_steps));
  t.emplace_back("augment.rotation_max", LGU_DOUBLE_FIELD(c.augment.rotation_max_deg));
  t.emplace_back("augment.zoom_min", LGU_DOUBLE_FIELD(c.augment.zoom_min));
  t.emplace_back("augment.zoom_max", LGU_DOUBLE_FIELD(c.augment.zoom_max));
  t.emplace_back("augment.noise_max", LGU_DOUBLE_FIELD(c.augment.noise_max));
  t.emplace_back("augment.flip_horizontal", LGU_BOOL_FIELD(c.augment.flip_horizontal));
  t.emplace_back("augment.flip_vertical", LGU_BOOL_FIELD(c.augment.flip_vertical));
  t.emplace_back("infer.batch", LGU_INT_FIELD(c.infer_batch));
  t.emplace_back("paths.data_root", LGU_STRING_FIELD(c.data_root));
  t.emplace_back("paths.run_dir", LGU_STRING_FIELD(c.run_dir));
  return t;
}

const FieldTable& fields() {
  static const FieldTable table = make_fields();
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& [name, field] : fields()) {
    if (name == key) return field;
  }
  throw_invalid("unknown config key '" + key + "'");
}

}  // namespace

RunConfig RunConfig::defaults(LesionClass lesion) {
  RunConfig c;
  c.lesion_class = lesion;
  c.global_net = {class_global_depth(lesion), 32};
  c.local_net = {class_local_depth(lesion), 32};
  c.stage(Stage::kPretrainGlobal) = {2e-4, 60, 2};
  c.stage(Stage::kPretrainLocal) = {2e-4, 60, 16};
  c.stage(Stage::kFuseHead) = {2e-4, 10, 8};
  c.stage(Stage::kFinetuneAll) = {1e-4, 60, 8};
  return c;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, field] : fields()) out.push_back(name);
    return out;
  }();
  return names;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field& f = find_field(key);
  const std::string v = unquote(value);
  f.set(*this, key, v);
  if (key == "geometry.preset") {
    for (const char* k : {"geometry.source_height", "geometry.source_width", "geometry.frame_height",
                          "geometry.frame_width", "geometry.global_height", "geometry.global_width",
                          "geometry.patch"}) {
      overrides.insert(k);
    }
  }
  overrides.insert(key);
  if (key == "lesion_class") {
    // Class-dependent defaults follow the class unless pinned explicitly.
    if (!overrides.count("global.depth")) global_net.depth = class_global_depth(lesion_class);
    if (!overrides.count("local.depth")) local_net.depth = class_local_depth(lesion_class);
  }
}

std::string RunConfig::get(const std::string& key) const { return find_field(key).get(*this); }

void RunConfig::validate() const {
  geometry.validate();
  model_config().validate();
  loss.validate();
  balance.validate();
  require(lr_power > 0, "schedule.power must be positive");
  for (Stage s : kAllStages) {
    const StageSettings& st = stage(s);
    require(st.lr > 0, "stage." + to_string(s) + ".lr must be positive");
    require(st.epochs >= 0, "stage." + to_string(s) + ".epochs must be non-negative");
    require(st.batch >= 1, "stage." + to_string(s) + ".batch must be >= 1");
  }
  require(patience >= 1, "train.patience must be >= 1");
  require(val_fraction >= 0 && val_fraction < 1, "train.val_fraction must be in [0, 1)");
  require(positive_sampling >= 0 && positive_sampling <= 1, "train.positive_sampling must be in [0, 1]");
  require(max_steps >= 0, "train.max_steps must be non-negative");
  require(infer_batch >= 1, "infer.batch must be >= 1");
  require(augment.zoom_min > 0 && augment.zoom_min <= augment.zoom_max, "augment zoom range is invalid");
  require(augment.rotation_max_deg >= 0 && augment.rotation_max_deg <= 360,
          "augment.rotation_max must be in [0, 360]");
  require(augment.noise_max >= 0, "augment.noise_max must be non-negative");
}

FusedConfig RunConfig::model_config() const {
  FusedConfig f;
  f.global = {3, global_net.base_channels, global_net.depth, 1, geometry.global.height,
              geometry.global.width};
  f.local = {3, local_net.base_channels, local_net.depth, 1, geometry.patch, geometry.patch};
  f.head_width = head_width;
  f.frame = geometry.frame;
  return f;
}

std::string RunConfig::fingerprint() const {
  std::ostringstream os;
  os << "class=" << to_string(lesion_class) << ";source=" << geometry.source.str()
     << ";frame=" << geometry.frame.str() << ";global=" << geometry.global.str()
     << ";patch=" << geometry.patch << ";gnet=" << global_net.depth << "/" << global_net.base_channels
     << ";lnet=" << local_net.depth << "/" << local_net.base_channels << ";head=" << head_width;
  const std::string s = os.str();
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "# resolved configuration, fingerprint " << fingerprint() << "\n";
  std::string section;
  for (const auto& [name, field] : fields()) {
    const auto dot = name.rfind('.');
    const std::string sec = dot == std::string::npos ? "" : name.substr(0, dot);
    const std::string key = dot == std::string::npos ? name : name.substr(dot + 1);
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    const std::string value = field.get(*this);
    os << key << " = " << (field.quoted ? "\"" + value + "\"" : value);
    if (overrides.count(name)) os << "  # override";
    os << "\n";
  }
  return os.str();
}

std::map<std::string, std::string> parse_kv_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quotes = !in_quotes;
      if (line[i] == '#' && !in_quotes) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      require(line.back() == ']', where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), where + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    require(!out.count(full), where + ": duplicate key '" + full + "'");
    out[full] = value;
  }
  return out;
}

RunConfig config_from_text(const std::string& text, const std::string& origin) {
  const auto kv = parse_kv_text(text, origin);
  LesionClass lesion = LesionClass::kEX;
  if (auto it = kv.find("lesion_class"); it != kv.end()) lesion = parse_lesion_class(unquote(it->second));
  RunConfig c = RunConfig::defaults(lesion);
  // Geometry presets first so that explicit size keys refine them.
  if (auto it = kv.find("geometry.preset"); it != kv.end()) c.set(it->first, it->second);
  for (const auto& [key, value] : kv) {
    if (key == "geometry.preset") continue;
    c.set(key, value);
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_text(buf.str(), path.string());
}

void apply_environment(RunConfig& cfg) {
  if (const char* root = std::getenv("LGUNET_DATA_ROOT"); root != nullptr && *root != '\0') {
    cfg.data_root = root;
    cfg.overrides.insert("paths.data_root");
  }
}

}  // namespace lgunet
