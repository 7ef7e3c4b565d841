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

#include "lgunet/lgunet.h"

#include <cmath>
#include <limits>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "commands.hpp"
#include "error.hpp"

using namespace lgunet;

struct lgu_config {
  RunConfig cfg;
  std::string scratch;
};

struct lgu_report {
  std::string text;
  std::vector<std::pair<std::string, double>> entries;
};

struct lgu_model {
  LoadedModel loaded;
  std::string scratch;
};

struct lgu_probmap {
  ProbabilityMap map;
};

namespace {

thread_local std::string g_last_error;

lgu_status fail(lgu_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

lgu_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return LGU_ERR_INVALID_ARGUMENT;
    case ErrorKind::kData: return LGU_ERR_DATA;
    case ErrorKind::kDiverged: return LGU_ERR_DIVERGED;
    case ErrorKind::kPrerequisite: return LGU_ERR_PREREQUISITE;
    case ErrorKind::kIo: return LGU_ERR_IO;
  }
  return LGU_ERR_INTERNAL;
}

template <typename F>
lgu_status guarded(F&& body) {
  try {
    body();
    return LGU_OK;
  } catch (const Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(LGU_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(LGU_ERR_INTERNAL, e.what());
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw_invalid(std::string(what) + " must not be null");
}

std::vector<Stream> parse_streams(const std::string& text) {
  if (text == "all") return {Stream::kFused, Stream::kGlobal, Stream::kLocal};
  std::vector<Stream> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(parse_stream(item));
  }
  if (out.empty()) throw_invalid("no stream named in '" + text + "'");
  return out;
}

}  // namespace

extern "C" {

const char* lgu_last_error(void) { return g_last_error.c_str(); }

const char* lgu_version(void) { return "1.0.0"; }

const char* lgu_status_name(lgu_status status) {
  switch (status) {
    case LGU_OK: return "ok";
    case LGU_ERR_INVALID_ARGUMENT: return "invalid argument";
    case LGU_ERR_DATA: return "data error";
    case LGU_ERR_DIVERGED: return "training diverged";
    case LGU_ERR_PREREQUISITE: return "missing prerequisite";
    case LGU_ERR_IO: return "i/o error";
    case LGU_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

lgu_status lgu_config_create(const char* lesion_class, lgu_config** out) {
  return guarded([&] {
    need(lesion_class, "lesion_class");
    need(out, "out");
    *out = new lgu_config{RunConfig::defaults(parse_lesion_class(lesion_class)), {}};
  });
}

lgu_status lgu_config_load(const char* path, lgu_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new lgu_config{load_config(path), {}};
  });
}

void lgu_config_destroy(lgu_config* config) { delete config; }

lgu_status lgu_config_set(lgu_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->cfg.set(key, value);
  });
}

lgu_status lgu_config_get(lgu_config* config, const char* key, const char** value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->scratch = config->cfg.get(key);
    *value = config->scratch.c_str();
  });
}

lgu_status lgu_config_dump(lgu_config* config, const char** text) {
  return guarded([&] {
    need(config, "config");
    need(text, "text");
    config->scratch = config->cfg.to_text();
    *text = config->scratch.c_str();
  });
}

lgu_status lgu_config_fingerprint(lgu_config* config, const char** fingerprint) {
  return guarded([&] {
    need(config, "config");
    need(fingerprint, "fingerprint");
    config->scratch = config->cfg.fingerprint();
    *fingerprint = config->scratch.c_str();
  });
}

lgu_status lgu_config_apply_environment(lgu_config* config) {
  return guarded([&] {
    need(config, "config");
    apply_environment(config->cfg);
  });
}

lgu_status lgu_config_validate(const lgu_config* config) {
  return guarded([&] {
    need(config, "config");
    config->cfg.validate();
  });
}

const char* lgu_config_keys(void) {
  static const std::string keys = [] {
    std::string s;
    for (const std::string& k : RunConfig::keys()) s += k + "\n";
    return s;
  }();
  return keys.c_str();
}

const char* lgu_report_text(const lgu_report* report) { return report ? report->text.c_str() : ""; }

size_t lgu_report_count(const lgu_report* report) { return report ? report->entries.size() : 0; }

lgu_status lgu_report_entry(const lgu_report* report, size_t index, const char** label, double* value) {
  return guarded([&] {
    need(report, "report");
    if (index >= report->entries.size()) throw_invalid("report entry index out of range");
    if (label) *label = report->entries[index].first.c_str();
    if (value) *value = report->entries[index].second;
  });
}

void lgu_report_destroy(lgu_report* report) { delete report; }

lgu_status lgu_synth(const char* kind, int n_images, int n_test, uint64_t seed, const char* lesion_class,
                     const char* geometry_preset, const char* out_dir, lgu_report** report) {
  return guarded([&] {
    need(kind, "kind");
    need(out_dir, "out_dir");
    SynthRequest req;
    req.kind = parse_synth_kind(kind);
    req.n_images = n_images;
    req.n_test = n_test;
    req.seed = seed;
    req.lesion_class = lesion_class ? parse_lesion_class(lesion_class)
                                    : (req.kind == SynthKind::kScattered ? LesionClass::kMA : LesionClass::kHE);
    const std::string preset = geometry_preset ? geometry_preset : "desk";
    if (preset == "desk") req.geometry = Geometry::desk();
    else if (preset == "full") req.geometry = Geometry::full();
    else throw_invalid("unknown geometry preset '" + preset + "' (expected desk or full)");
    req.out = out_dir;
    const DatasetManifest m = cmd_synth(req);
    if (report) {
      auto* r = new lgu_report;
      r->text = "wrote " + std::to_string(m.train_ids.size() + m.test_ids.size()) + " images (" +
                std::to_string(m.train_ids.size()) + " train, " + std::to_string(m.test_ids.size()) +
                " test) for class " + to_string(m.lesion_class) + " to " + m.root.string() + "\n";
      r->entries = {{"train", static_cast<double>(m.train_ids.size())},
                    {"test", static_cast<double>(m.test_ids.size())}};
      *report = r;
    }
  });
}

lgu_status lgu_prepare(const lgu_config* config, double test_fraction, lgu_report** report) {
  return guarded([&] {
    need(config, "config");
    std::optional<double> fraction;
    if (test_fraction >= 0.0) fraction = test_fraction;
    const PrepareReport p = cmd_prepare(config->cfg, fraction);
    if (report) {
      auto* r = new lgu_report;
      r->text = p.summary + "\n";
      r->entries = {{"train", static_cast<double>(p.manifest.train_ids.size())},
                    {"test", static_cast<double>(p.manifest.test_ids.size())}};
      *report = r;
    }
  });
}

lgu_status lgu_train_stage(const lgu_config* config, const char* stage, lgu_epoch_callback callback,
                           void* user, lgu_report** report) {
  return guarded([&] {
    need(config, "config");
    need(stage, "stage");
    const Stage s = parse_stage(stage);
    EpochCallback on_epoch;
    if (callback) {
      on_epoch = [&](const EpochRecord& rec) {
        const std::string name = to_string(rec.stage);
        callback(name.c_str(), rec.epoch, rec.lr, rec.loss,
                 rec.val_aupr ? *rec.val_aupr : std::numeric_limits<double>::quiet_NaN(), user);
      };
    }
    const StageReport sr = cmd_train(s, config->cfg, on_epoch);
    if (report) {
      auto* r = new lgu_report;
      r->text = sr.checkpoint.string();
      r->entries = {{"epochs", static_cast<double>(sr.epochs.size())},
                    {"steps", static_cast<double>(sr.steps)},
                    {"final_loss", sr.epochs.empty() ? 0.0 : sr.epochs.back().loss}};
      *report = r;
    }
  });
}

lgu_status lgu_eval(const lgu_config* config, const char* checkpoint, const char* split, const char* streams,
                    lgu_report** report) {
  return guarded([&] {
    need(config, "config");
    const std::filesystem::path ck = checkpoint ? std::filesystem::path(checkpoint) : latest_checkpoint(config->cfg);
    const EvalReport e = cmd_eval(config->cfg, ck, split ? split : "test", parse_streams(streams ? streams : "fused"));
    if (report) {
      auto* r = new lgu_report;
      r->text = e.table();
      for (const EvalRow& row : e.rows) {
        r->entries.emplace_back(to_string(row.stream) + "/pooled", row.pooled_aupr);
        r->entries.emplace_back(to_string(row.stream) + "/mean_image",
                                row.mean_image_aupr.value_or(std::numeric_limits<double>::quiet_NaN()));
      }
      *report = r;
    }
  });
}

lgu_status lgu_infer(const lgu_config* config, const char* checkpoint, const char* const* images, size_t n_images,
                     const char* out_dir, const char* stream, lgu_report** report) {
  return guarded([&] {
    need(config, "config");
    need(images, "images");
    need(out_dir, "out_dir");
    InferRequest req;
    req.checkpoint = checkpoint ? std::filesystem::path(checkpoint) : latest_checkpoint(config->cfg);
    for (size_t i = 0; i < n_images; ++i) {
      need(images[i], "image path");
      req.images.emplace_back(images[i]);
    }
    req.out = out_dir;
    req.stream = parse_stream(stream ? stream : "fused");
    const auto written = cmd_infer(config->cfg, req);
    if (report) {
      auto* r = new lgu_report;
      for (const auto& p : written) r->text += p.string() + "\n";
      r->entries = {{"maps", static_cast<double>(written.size())}};
      *report = r;
    }
  });
}

lgu_status lgu_curves(const lgu_config* config, const char* predictions, const char* out_dir, const char* split,
                      int trapezoid, lgu_report** report) {
  return guarded([&] {
    need(config, "config");
    need(predictions, "predictions");
    need(out_dir, "out_dir");
    CurvesRequest req;
    req.predictions = predictions;
    req.out = out_dir;
    req.split = split ? split : "test";
    req.rule = trapezoid ? Integration::kTrapezoid : Integration::kStep;
    const auto results = cmd_curves(config->cfg, req);
    if (report) {
      auto* r = new lgu_report;
      r->text = score_table(results);
      for (const CurveResult& c : results) r->entries.emplace_back(to_string(c.lesion_class), c.curve.aupr);
      *report = r;
    }
  });
}

lgu_status lgu_model_load(const char* checkpoint, lgu_model** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    *out = new lgu_model{load_model(checkpoint), {}};
  });
}

void lgu_model_destroy(lgu_model* model) { delete model; }

lgu_status lgu_model_stage(const lgu_model* model, const char** stage) {
  return guarded([&] {
    need(model, "model");
    need(stage, "stage");
    auto* m = const_cast<lgu_model*>(model);
    m->scratch = to_string(model->loaded.stage);
    *stage = m->scratch.c_str();
  });
}

lgu_status lgu_model_predict(lgu_model* model, const char* image_path, const char* stream, lgu_probmap** out) {
  return guarded([&] {
    need(model, "model");
    need(image_path, "image_path");
    need(out, "out");
    const FrameSize frame = model->loaded.config.geometry.frame;
    cv::Mat image = cv::imread(image_path, cv::IMREAD_COLOR);
    if (image.empty()) throw_data(std::string("cannot decode image ") + image_path);
    if (image.rows < frame.height || image.cols < frame.width) {
      throw_data(std::string(image_path) + " is smaller than the " + frame.str() + " frame");
    }
    const auto [top, left] = center_crop_offsets({image.rows, image.cols}, frame);
    const cv::Mat cropped = image(cv::Rect(left, top, frame.width, frame.height)).clone();
    *out = new lgu_probmap{predict_frame(model->loaded, cropped, parse_stream(stream ? stream : "fused"),
                                         model->loaded.config.infer_batch)};
  });
}

int lgu_probmap_height(const lgu_probmap* map) { return map ? map->map.height : 0; }
int lgu_probmap_width(const lgu_probmap* map) { return map ? map->map.width : 0; }
const double* lgu_probmap_data(const lgu_probmap* map) { return map ? map->map.values.data() : nullptr; }

lgu_status lgu_probmap_save(const lgu_probmap* map, const char* png_path) {
  return guarded([&] {
    need(map, "map");
    need(png_path, "png_path");
    std::filesystem::path png(png_path);
    std::filesystem::path sidecar = png;
    sidecar.replace_extension(".json");
    save_probability_map(map->map, png, sidecar, "{\"provenance\": \"" + map->map.provenance + "\"}");
  });
}

void lgu_probmap_destroy(lgu_probmap* map) { delete map; }

lgu_status lgu_aupr(const double* scores, const uint8_t* truth, size_t n, int trapezoid, double* aupr) {
  return guarded([&] {
    need(scores, "scores");
    need(truth, "truth");
    need(aupr, "aupr");
    *aupr = pr_curve({scores, n}, {truth, n}, trapezoid ? Integration::kTrapezoid : Integration::kStep).aupr;
  });
}

lgu_status lgu_poly_lr(double initial_lr, double power, int64_t total_steps, int64_t step, double* lr) {
  return guarded([&] {
    need(lr, "lr");
    if (total_steps <= 0) throw_invalid("total_steps must be positive");
    if (step < 0) throw_invalid("step must be non-negative");
    *lr = PolySchedule{initial_lr, power, total_steps}.at(step);
  });
}

lgu_status lgu_patch_count(int frame_height, int frame_width, int patch, int* count) {
  return guarded([&] {
    need(count, "count");
    *count = static_cast<int>(patch_grid({frame_height, frame_width}, patch).size());
  });
}

}  // extern "C"
