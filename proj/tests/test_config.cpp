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

#include <cstdlib>
#include <fstream>

#include "config.hpp"
#include "error.hpp"
#include "support.hpp"

using namespace lgunet;
using namespace lgunet::testing;

TEST_CASE("per-class depth defaults") {
  const RunConfig ma = RunConfig::defaults(LesionClass::kMA);
  CHECK(ma.global_net.depth == 3);
  CHECK(ma.local_net.depth == 3);
  const RunConfig ex = RunConfig::defaults(LesionClass::kEX);
  CHECK(ex.global_net.depth == 6);
  CHECK(ex.local_net.depth == 3);
  const RunConfig he = RunConfig::defaults(LesionClass::kHE);
  CHECK(he.global_net.depth == 6);
  CHECK(he.local_net.depth == 6);
  const RunConfig se = RunConfig::defaults(LesionClass::kSE);
  CHECK(se.global_net.depth == 4);
  CHECK(se.local_net.depth == 6);
  for (const RunConfig& c : {ma, ex, he, se}) CHECK_NOTHROW(c.validate());
}

TEST_CASE("stage defaults") {
  const RunConfig c = RunConfig::defaults(LesionClass::kEX);
  CHECK(c.stage(Stage::kPretrainGlobal).lr == 2e-4);
  CHECK(c.stage(Stage::kPretrainLocal).lr == 2e-4);
  CHECK(c.stage(Stage::kFuseHead).lr == 2e-4);
  CHECK(c.stage(Stage::kFuseHead).epochs == 10);
  CHECK(c.stage(Stage::kFinetuneAll).lr == 1e-4);
  CHECK(c.stage(Stage::kFinetuneAll).epochs == 60);
  CHECK(c.lr_power == 0.9);
  CHECK(c.loss.lambda1 == 1.0);
  CHECK(c.loss.lambda2 == 1.0);
  CHECK(c.loss.lambda3 == 1e-5);
  CHECK(c.geometry.patch == 256);
  CHECK(c.geometry.global == FrameSize{640, 640});
}

TEST_CASE("stage names parse in both spellings") {
  CHECK(parse_stage("global") == Stage::kPretrainGlobal);
  CHECK(parse_stage("pretrain_local") == Stage::kPretrainLocal);
  CHECK(parse_stage("fuse-head") == Stage::kFuseHead);
  CHECK(parse_stage("finetune") == Stage::kFinetuneAll);
  for (Stage s : kAllStages) CHECK(parse_stage(to_string(s)) == s);
  CHECK_THROWS_AS(parse_stage("warmup"), Error);
}

TEST_CASE("class switch follows defaults unless pinned") {
  RunConfig c = RunConfig::defaults(LesionClass::kEX);
  c.set("lesion_class", "HE");
  CHECK(c.local_net.depth == 6);
  c.set("local.depth", "4");
  c.set("lesion_class", "MA");
  CHECK(c.local_net.depth == 4);
  CHECK(c.global_net.depth == 3);
}

TEST_CASE("validation rejects inconsistent settings") {
  auto invalid = [](const std::string& key, const std::string& value) {
    RunConfig c = RunConfig::defaults(LesionClass::kEX);
    c.set(key, value);
    CHECK_THROWS_AS(c.validate(), Error);
  };
  invalid("geometry.patch", "300");
  invalid("geometry.global_height", "600");
  invalid("geometry.frame_height", "3000");
  invalid("local.depth", "9");
  invalid("loss.lambda3", "-1");
  invalid("stage.fuse_head.lr", "0");
  invalid("train.val_fraction", "1");
  invalid("augment.zoom_min", "2");
  RunConfig c = RunConfig::defaults(LesionClass::kEX);
  CHECK_THROWS_AS(c.set("no.such.key", "1"), Error);
  CHECK_THROWS_AS(c.set("seed", "abc"), Error);
  CHECK_THROWS_AS(c.set("geometry.preset", "huge"), Error);
}

TEST_CASE("presets") {
  RunConfig c = RunConfig::defaults(LesionClass::kMA);
  c.set("geometry.preset", "desk");
  CHECK(c.geometry == Geometry::desk());
  CHECK_NOTHROW(c.validate());
  CHECK(c.get("geometry.preset") == "desk");
  c.set("geometry.patch", "16");
  CHECK(c.get("geometry.preset") == "custom");
}

TEST_CASE("text round trip preserves every key") {
  RunConfig c = RunConfig::defaults(LesionClass::kSE);
  c.set("geometry.preset", "desk");
  c.set("seed", "42");
  c.set("loss.lambda3", "3.5e-06");
  c.set("stage.finetune_all.epochs", "7");
  c.set("paths.run_dir", "/tmp/some run");
  c.set("augment.flip_vertical", "false");
  const std::string text = c.to_text();
  CHECK(text.find("# override") != std::string::npos);
  const RunConfig back = config_from_text(text);
  for (const std::string& k : RunConfig::keys()) {
    CAPTURE(k);
    CHECK(back.get(k) == c.get(k));
  }
  CHECK(back.fingerprint() == c.fingerprint());
  CHECK(config_from_text(back.to_text()).to_text() == back.to_text());
}

TEST_CASE("parser handles sections, comments and quoting") {
  const RunConfig c = config_from_text(
      "lesion_class = \"MA\"  # tiny lesions\n"
      "seed = 5\n\n"
      "[geometry]\npreset = \"desk\"\n"
      "[stage.fuse_head]\nepochs = 3\n"
      "[paths]\nrun_dir = 'runs/a'\n");
  CHECK(c.lesion_class == LesionClass::kMA);
  CHECK(c.seed == 5);
  CHECK(c.geometry == Geometry::desk());
  CHECK(c.stage(Stage::kFuseHead).epochs == 3);
  CHECK(c.run_dir == "runs/a");
  CHECK(c.overrides.count("seed"));
  CHECK_FALSE(c.overrides.count("loss.gamma"));
  CHECK_THROWS_WITH_AS(config_from_text("seed = 1\nbogus = 2\n", "x.toml"), doctest::Contains("bogus"), Error);
  CHECK_THROWS_AS(config_from_text("[unterminated\n"), Error);
  CHECK_THROWS_AS(config_from_text("just words\n"), Error);
}

TEST_CASE("preset is applied before explicit geometry keys regardless of order") {
  const RunConfig c = config_from_text("geometry.patch = 16\ngeometry.preset = desk\n");
  CHECK(c.geometry.patch == 16);
  CHECK(c.geometry.frame == Geometry::desk().frame);
}

TEST_CASE("fingerprint tracks architecture and geometry only") {
  const RunConfig base = RunConfig::defaults(LesionClass::kEX);
  RunConfig other = base;
  other.set("seed", "99");
  other.set("stage.finetune_all.lr", "0.5");
  CHECK(other.fingerprint() == base.fingerprint());
  other.set("head.width", "32");
  CHECK(other.fingerprint() != base.fingerprint());
  RunConfig geo = base;
  geo.set("geometry.preset", "desk");
  CHECK(geo.fingerprint() != base.fingerprint());
}

TEST_CASE("environment overrides the data root") {
  TempDir dir("cfg");
  {
    std::ofstream f(dir / "run.toml");
    f << "[paths]\ndata_root = \"from_file\"\n";
  }
  RunConfig c = load_config(dir / "run.toml");
  CHECK(c.data_root == "from_file");
  ::setenv("LGUNET_DATA_ROOT", "/from/env", 1);
  apply_environment(c);
  ::unsetenv("LGUNET_DATA_ROOT");
  CHECK(c.data_root == "/from/env");
  apply_environment(c);
  CHECK(c.data_root == "/from/env");
  CHECK_THROWS_AS(load_config(dir / "missing.toml"), Error);
}
