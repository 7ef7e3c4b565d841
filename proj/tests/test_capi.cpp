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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "lgunet/lgunet.h"

namespace fs = std::filesystem;

namespace {

class Scratch {
 public:
  explicit Scratch(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("lgunet_capi_" + tag + "_" + std::to_string(rd()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  std::string str(const std::string& child = "") const { return (path_ / child).string(); }

 private:
  fs::path path_;
};

std::map<std::string, double> entries(const lgu_report* r) {
  std::map<std::string, double> out;
  for (size_t i = 0; i < lgu_report_count(r); ++i) {
    const char* label = nullptr;
    double v = 0;
    REQUIRE(lgu_report_entry(r, i, &label, &v) == LGU_OK);
    out[label] = v;
  }
  return out;
}

lgu_config* tiny_config(const Scratch& dir) {
  lgu_config* cfg = nullptr;
  REQUIRE(lgu_config_create("MA", &cfg) == LGU_OK);
  const std::vector<std::pair<std::string, std::string>> kv = {
      {"geometry.preset", "desk"},      {"global.depth", "2"},         {"local.depth", "2"},
      {"global.base_channels", "4"},    {"local.base_channels", "4"},  {"head.width", "4"},
      {"train.max_steps", "2"},         {"train.val_fraction", "0"},   {"paths.data_root", dir.str("data")},
      {"paths.run_dir", dir.str("run")}};
  for (const auto& [k, v] : kv) REQUIRE(lgu_config_set(cfg, k.c_str(), v.c_str()) == LGU_OK);
  for (const char* s : {"pretrain_global", "pretrain_local", "fuse_head", "finetune_all"}) {
    REQUIRE(lgu_config_set(cfg, ("stage." + std::string(s) + ".epochs").c_str(), "1") == LGU_OK);
  }
  return cfg;
}

void count_epochs(const char*, int, double, double loss, double, void* user) {
  CHECK(std::isfinite(loss));
  ++*static_cast<int*>(user);
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(lgu_version()) == "1.0.0");
  CHECK(std::string(lgu_status_name(LGU_OK)) == "ok");
  CHECK(std::string(lgu_status_name(LGU_ERR_PREREQUISITE)).size() > 0);
}

TEST_CASE("config handle") {
  lgu_config* cfg = nullptr;
  CHECK(lgu_config_create("XX", &cfg) == LGU_ERR_INVALID_ARGUMENT);
  CHECK(cfg == nullptr);
  CHECK(std::string(lgu_last_error()).find("XX") != std::string::npos);
  REQUIRE(lgu_config_create("EX", &cfg) == LGU_OK);
  const char* v = nullptr;
  REQUIRE(lgu_config_get(cfg, "global.depth", &v) == LGU_OK);
  CHECK(std::string(v) == "6");
  CHECK(lgu_config_set(cfg, "bogus.key", "1") == LGU_ERR_INVALID_ARGUMENT);
  CHECK(lgu_config_set(cfg, "geometry.patch", "300") == LGU_OK);
  CHECK(lgu_config_validate(cfg) == LGU_ERR_INVALID_ARGUMENT);
  const char* text = nullptr;
  REQUIRE(lgu_config_dump(cfg, &text) == LGU_OK);
  CHECK(std::string(text).find("# override") != std::string::npos);
  const char* fp = nullptr;
  REQUIRE(lgu_config_fingerprint(cfg, &fp) == LGU_OK);
  CHECK(std::string(fp).size() == 16);
  CHECK(std::string(lgu_config_keys()).find("loss.lambda3") != std::string::npos);
  CHECK(lgu_config_get(nullptr, "seed", &v) == LGU_ERR_INVALID_ARGUMENT);
  lgu_config_destroy(cfg);
  lgu_config_destroy(nullptr);
}

TEST_CASE("numeric helpers") {
  const double scores[] = {0.9, 0.8, 0.7, 0.6};
  const uint8_t truth[] = {1, 0, 1, 0};
  double aupr = 0;
  REQUIRE(lgu_aupr(scores, truth, 4, 0, &aupr) == LGU_OK);
  CHECK(aupr == doctest::Approx(0.8333333333));
  const uint8_t none[] = {0, 0, 0, 0};
  CHECK(lgu_aupr(scores, none, 4, 0, &aupr) == LGU_ERR_DATA);
  double lr = 0;
  REQUIRE(lgu_poly_lr(2e-4, 0.9, 1000, 500, &lr) == LGU_OK);
  CHECK(lr == doctest::Approx(1.0718e-4).epsilon(1e-4));
  int count = 0;
  REQUIRE(lgu_patch_count(2816, 3328, 256, &count) == LGU_OK);
  CHECK(count == 143);
  CHECK(lgu_patch_count(2816, 3300, 256, &count) == LGU_ERR_INVALID_ARGUMENT);
}

TEST_CASE("end to end through the C interface") {
  Scratch dir("e2e");
  lgu_report* rep = nullptr;
  REQUIRE(lgu_synth("scattered", 4, 1, 7, "MA", "desk", dir.str("data").c_str(), &rep) == LGU_OK);
  lgu_report_destroy(rep);
  CHECK(lgu_synth("dense", 4, 1, 7, "MA", "desk", dir.str("other").c_str(), &rep) == LGU_ERR_INVALID_ARGUMENT);

  lgu_config* cfg = tiny_config(dir);
  REQUIRE(lgu_prepare(cfg, -1.0, &rep) == LGU_OK);
  CHECK(lgu_report_text(rep) != nullptr);
  lgu_report_destroy(rep);

  CHECK(lgu_train_stage(cfg, "fuse-head", nullptr, nullptr, &rep) == LGU_ERR_PREREQUISITE);
  const std::string why = lgu_last_error();
  CHECK(why.find("pretrain_global") != std::string::npos);
  CHECK(why.find("pretrain_local") != std::string::npos);

  for (const char* stage : {"global", "local", "fuse-head", "finetune"}) {
    int epochs = 0;
    REQUIRE(lgu_train_stage(cfg, stage, count_epochs, &epochs, &rep) == LGU_OK);
    CHECK(epochs == 1);
    const auto e = entries(rep);
    CHECK(e.at("epochs") == 1);
    CHECK(e.at("steps") >= 1);
    CHECK(fs::exists(lgu_report_text(rep)));
    lgu_report_destroy(rep);
  }

  REQUIRE(lgu_eval(cfg, nullptr, "test", "all", &rep) == LGU_OK);
  const auto scores = entries(rep);
  for (const char* k : {"fused/pooled", "global/pooled", "local/pooled", "fused/mean_image"}) {
    CAPTURE(k);
    REQUIRE(scores.count(k));
    CHECK(scores.at(k) >= 0.0);
    CHECK(scores.at(k) <= 1.0);
  }
  lgu_report_destroy(rep);

  const std::string ckpt = dir.str("run/checkpoints/finetune_all.ckpt");
  const std::string image = dir.str("data/images/synth_003.png");
  const char* images[] = {image.c_str()};
  REQUIRE(lgu_infer(cfg, ckpt.c_str(), images, 1, dir.str("pred").c_str(), "fused", &rep) == LGU_OK);
  lgu_report_destroy(rep);
  CHECK(fs::exists(dir.str("pred/synth_003_MA.png")));
  REQUIRE(lgu_curves(cfg, dir.str("pred").c_str(), dir.str("curves").c_str(), "test", 0, &rep) == LGU_OK);
  CHECK(entries(rep).count("MA"));
  lgu_report_destroy(rep);
  CHECK(fs::exists(dir.str("curves/pr_MA.csv")));

  lgu_model* model = nullptr;
  REQUIRE(lgu_model_load(ckpt.c_str(), &model) == LGU_OK);
  const char* stage = nullptr;
  REQUIRE(lgu_model_stage(model, &stage) == LGU_OK);
  CHECK(std::string(stage) == "finetune_all");
  lgu_probmap* map = nullptr;
  REQUIRE(lgu_model_predict(model, image.c_str(), "fused", &map) == LGU_OK);
  CHECK(lgu_probmap_height(map) == 352);
  CHECK(lgu_probmap_width(map) == 416);
  const double* p = lgu_probmap_data(map);
  for (int i = 0; i < 352 * 416; ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
      FAIL("probability out of range");
      break;
    }
  }
  CHECK(lgu_probmap_save(map, dir.str("one.png").c_str()) == LGU_OK);
  lgu_probmap_destroy(map);
  CHECK(lgu_model_predict(model, dir.str("nope.png").c_str(), "fused", &map) == LGU_ERR_DATA);
  CHECK(lgu_model_predict(model, image.c_str(), "sideways", &map) == LGU_ERR_INVALID_ARGUMENT);
  lgu_model_destroy(model);
  CHECK(lgu_model_load(dir.str("missing.ckpt").c_str(), &model) != LGU_OK);
  lgu_config_destroy(cfg);
}
