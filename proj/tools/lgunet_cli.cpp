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

// Command-line front end. Talks to the library through the C API only.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lgunet/lgunet.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

int exit_code(lgu_status status) {
  switch (status) {
    case LGU_OK: return kExitOk;
    case LGU_ERR_INVALID_ARGUMENT: return kExitUsage;
    case LGU_ERR_DATA:
    case LGU_ERR_PREREQUISITE: return kExitData;
    case LGU_ERR_DIVERGED: return kExitDiverged;
    default: return kExitFailure;
  }
}

struct CommandFailed {
  int code;
};

void check(lgu_status status) {
  if (status == LGU_OK) return;
  std::cerr << "error (" << lgu_status_name(status) << "): " << lgu_last_error() << "\n";
  throw CommandFailed{exit_code(status)};
}

struct ConfigDeleter {
  void operator()(lgu_config* c) const { lgu_config_destroy(c); }
};
struct ReportDeleter {
  void operator()(lgu_report* r) const { lgu_report_destroy(r); }
};
using ConfigPtr = std::unique_ptr<lgu_config, ConfigDeleter>;
using ReportPtr = std::unique_ptr<lgu_report, ReportDeleter>;

// Options shared by every command that resolves a run configuration.
struct ConfigOptions {
  std::string file;
  std::string lesion_class;
  std::string data_root;
  std::string run_dir;
  std::optional<long long> seed;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", file, "run configuration file (key = value)")->check(CLI::ExistingFile);
    cmd->add_option("--class", lesion_class, "lesion class: EX, MA, HE or SE");
    cmd->add_option("--data-root", data_root, "dataset root (overrides file and LGUNET_DATA_ROOT)");
    cmd->add_option("--run-dir", run_dir, "directory for checkpoints and logs");
    cmd->add_option("--seed", seed, "weight initialisation seed");
    cmd->add_option("--set", sets, "override a config key, KEY=VALUE (repeatable)");
  }

  // File values, then the environment, then flags.
  ConfigPtr resolve() const {
    lgu_config* raw = nullptr;
    if (!file.empty()) check(lgu_config_load(file.c_str(), &raw));
    else check(lgu_config_create(lesion_class.empty() ? "EX" : lesion_class.c_str(), &raw));
    ConfigPtr cfg(raw);
    check(lgu_config_apply_environment(cfg.get()));
    if (!file.empty() && !lesion_class.empty()) check(lgu_config_set(cfg.get(), "lesion_class", lesion_class.c_str()));
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) {
        std::cerr << "error (invalid argument): --set expects KEY=VALUE, got '" << kv << "'\n";
        throw CommandFailed{kExitUsage};
      }
      check(lgu_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
    if (!data_root.empty()) check(lgu_config_set(cfg.get(), "paths.data_root", data_root.c_str()));
    if (!run_dir.empty()) check(lgu_config_set(cfg.get(), "paths.run_dir", run_dir.c_str()));
    if (seed) check(lgu_config_set(cfg.get(), "seed", std::to_string(*seed).c_str()));
    check(lgu_config_validate(cfg.get()));
    return cfg;
  }
};

void print_report(const lgu_report* report) { std::cout << lgu_report_text(report); }

void on_epoch(const char* stage, int epoch, double lr, double loss, double val_aupr, void* user) {
  if (*static_cast<bool*>(user)) return;
  std::fprintf(stderr, "%s epoch %d  lr %.3e  loss %.6f", stage, epoch, lr, loss);
  if (!std::isnan(val_aupr)) std::fprintf(stderr, "  val_aupr %.4f", val_aupr);
  std::fprintf(stderr, "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local-global U-Net lesion segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(lgu_version()));

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string kind;
  int n_images = 8;
  int n_test = 0;
  long long synth_seed = 0;
  std::string synth_class;
  std::string geometry = "desk";
  std::string synth_out;
  synth->add_option("--kind", kind, "scattered or compact")->required();
  synth->add_option("--n", n_images, "number of images")->check(CLI::PositiveNumber);
  synth->add_option("--n-test", n_test, "how many of them go to the test split");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--class", synth_class, "lesion class label (default MA for scattered, HE for compact)");
  synth->add_option("--geometry", geometry, "desk or full");
  synth->add_option("--out", synth_out, "output directory (must be empty or absent)")->required();

  // prepare
  auto* prepare = app.add_subcommand("prepare", "validate a dataset tree and write its split file");
  ConfigOptions prepare_cfg;
  prepare_cfg.attach(prepare);
  double test_fraction = -1.0;
  prepare->add_option("--test-fraction", test_fraction, "create a missing split holding out this fraction");

  // train
  auto* train = app.add_subcommand("train", "run one training stage");
  ConfigOptions train_cfg;
  train_cfg.attach(train);
  std::string stage;
  bool quiet = false;
  train->add_option("--stage", stage, "global, local, fuse-head or finetune")
      ->required()
      ->check(CLI::IsMember({"global", "local", "fuse-head", "finetune", "pretrain_global", "pretrain_local",
                             "fuse_head", "finetune_all"}));
  train->add_flag("-q,--quiet", quiet, "no per-epoch progress");

  // eval
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  ConfigOptions eval_cfg;
  eval_cfg.attach(eval);
  std::string eval_ck;
  std::string eval_split = "test";
  std::string eval_stream = "fused";
  eval->add_option("--checkpoint", eval_ck, "checkpoint file (default: latest in run dir)");
  eval->add_option("--split", eval_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--stream", eval_stream, "fused, global, local, a comma list, or all");

  // infer
  auto* infer = app.add_subcommand("infer", "write probability maps for images");
  ConfigOptions infer_cfg;
  infer_cfg.attach(infer);
  std::string infer_ck;
  std::string infer_out = "out";
  std::string infer_stream = "fused";
  std::vector<std::string> images;
  infer->add_option("--checkpoint", infer_ck, "checkpoint file (default: latest in run dir)");
  infer->add_option("--out", infer_out, "output directory");
  infer->add_option("--stream", infer_stream, "fused, global or local")
      ->check(CLI::IsMember({"fused", "global", "local"}));
  infer->add_option("images", images, "image files")->required()->check(CLI::ExistingFile);

  // curves
  auto* curves = app.add_subcommand("curves", "PR curves, plots and scores from saved maps");
  ConfigOptions curves_cfg;
  curves_cfg.attach(curves);
  std::string predictions;
  std::string curves_out = "curves";
  std::string curves_split = "test";
  bool trapezoid = false;
  curves->add_option("--predictions", predictions, "directory of <id>_<CLASS>.png maps")->required();
  curves->add_option("--out", curves_out, "output directory");
  curves->add_option("--split", curves_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  curves->add_flag("--trapezoid", trapezoid, "trapezoidal integration instead of the step rule");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    lgu_report* raw = nullptr;
    if (synth->parsed()) {
      check(lgu_synth(kind.c_str(), n_images, n_test, static_cast<uint64_t>(synth_seed),
                      synth_class.empty() ? nullptr : synth_class.c_str(), geometry.c_str(), synth_out.c_str(),
                      &raw));
    } else if (prepare->parsed()) {
      ConfigPtr cfg = prepare_cfg.resolve();
      check(lgu_prepare(cfg.get(), test_fraction, &raw));
    } else if (train->parsed()) {
      ConfigPtr cfg = train_cfg.resolve();
      check(lgu_train_stage(cfg.get(), stage.c_str(), on_epoch, &quiet, &raw));
      ReportPtr report(raw);
      std::cout << "checkpoint " << lgu_report_text(report.get()) << "\n";
      return kExitOk;
    } else if (eval->parsed()) {
      ConfigPtr cfg = eval_cfg.resolve();
      check(lgu_eval(cfg.get(), eval_ck.empty() ? nullptr : eval_ck.c_str(), eval_split.c_str(),
                     eval_stream.c_str(), &raw));
    } else if (infer->parsed()) {
      ConfigPtr cfg = infer_cfg.resolve();
      std::vector<const char*> paths;
      for (const std::string& p : images) paths.push_back(p.c_str());
      check(lgu_infer(cfg.get(), infer_ck.empty() ? nullptr : infer_ck.c_str(), paths.data(), paths.size(),
                      infer_out.c_str(), infer_stream.c_str(), &raw));
    } else if (curves->parsed()) {
      ConfigPtr cfg = curves_cfg.resolve();
      check(lgu_curves(cfg.get(), predictions.c_str(), curves_out.c_str(), curves_split.c_str(), trapezoid ? 1 : 0,
                       &raw));
    }
    ReportPtr report(raw);
    print_report(report.get());
  } catch (const CommandFailed& failed) {
    return failed.code;
  }
  return kExitOk;
}
