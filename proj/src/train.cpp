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

#include "train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "error.hpp"
#include "infer.hpp"
#include "loss.hpp"
#include "metrics.hpp"
#include "optim.hpp"

namespace lgunet {

namespace fs = std::filesystem;

std::set<std::string> freeze_mask(FusedModel& model, Stage stage) {
  std::vector<Parameter*> params;
  switch (stage) {
    case Stage::kPretrainGlobal: model.global_net().collect(params); break;
    case Stage::kPretrainLocal: model.local_net().collect(params); break;
    case Stage::kFuseHead: model.head().collect(params); break;
    case Stage::kFinetuneAll: params = model.parameters(); break;
    default: throw_invalid("freeze_mask: unknown stage");
  }
  std::set<std::string> names;
  for (const Parameter* p : params) names.insert(p->name);
  return names;
}

std::vector<Stage> prerequisites(Stage stage) {
  switch (stage) {
    case Stage::kPretrainGlobal: return {};
    case Stage::kPretrainLocal: return {Stage::kPretrainGlobal};
    case Stage::kFuseHead: return {Stage::kPretrainGlobal, Stage::kPretrainLocal};
    case Stage::kFinetuneAll: return {Stage::kPretrainGlobal, Stage::kPretrainLocal, Stage::kFuseHead};
  }
  return {};
}

fs::path checkpoint_path(const RunConfig& cfg, Stage stage) {
  return fs::path(cfg.run_dir) / "checkpoints" / (to_string(stage) + ".ckpt");
}

void prepare_stage_model(FusedModel& model, Stage stage, const RunConfig& cfg) {
  std::vector<std::string> missing;
  for (Stage pre : prerequisites(stage)) {
    if (!fs::exists(checkpoint_path(cfg, pre))) {
      missing.push_back(to_string(pre) + " checkpoint (" + checkpoint_path(cfg, pre).string() + ")");
    }
  }
  if (!missing.empty()) {
    std::string msg = to_string(stage) + " requires ";
    for (std::size_t i = 0; i < missing.size(); ++i) {
      if (i > 0) msg += i + 1 == missing.size() ? " and " : ", ";
      msg += missing[i];
    }
    throw Error(ErrorKind::kPrerequisite, msg);
  }
  const std::string fp = cfg.fingerprint();
  for (Stage pre : prerequisites(stage)) {
    const Checkpoint ck = load_checkpoint(checkpoint_path(cfg, pre), fp);
    if (ck.stage != pre) {
      throw_data(checkpoint_path(cfg, pre).string() + " holds stage " + to_string(ck.stage));
    }
  }
  if (stage == Stage::kPretrainGlobal) {
    model.init(cfg.seed);
    return;
  }
  const std::vector<Stage> pre = prerequisites(stage);
  restore(model, load_checkpoint(checkpoint_path(cfg, pre.back()), fp));
}

std::pair<std::vector<std::string>, std::vector<std::string>> validation_split(
    const DatasetManifest& manifest, const RunConfig& cfg) {
  std::vector<std::string> ids = manifest.train_ids;
  const std::size_t n_val = static_cast<std::size_t>(std::floor(ids.size() * cfg.val_fraction));
  if (n_val == 0) return {ids, {}};
  Rng rng(mix_seed(cfg.data_seed, 0x7661ULL));
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::string> val(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::string> train(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

namespace {

struct Snapshot {
  std::vector<Tensor> params;
  std::vector<Tensor> buffers;
};

Snapshot take_snapshot(FusedModel& model) {
  Snapshot s;
  for (Parameter* p : model.parameters()) s.params.push_back(p->value);
  for (const Buffer& b : model.buffers()) s.buffers.push_back(*b.value);
  return s;
}

void put_snapshot(FusedModel& model, const Snapshot& s) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.params[i];
  auto buffers = model.buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].value = s.buffers[i];
}

class StageRunner {
 public:
  StageRunner(Stage stage, const DatasetManifest& manifest, const RunConfig& cfg)
      : stage_(stage), manifest_(manifest), cfg_(cfg), model_(cfg.model_config()) {}

  StageReport run(const EpochCallback& on_epoch);

 private:
  struct WorkItem {
    std::size_t image;                 // index into train frames
    std::vector<PatchWindow> windows;  // empty for the global stage
  };

  std::vector<WorkItem> plan_epoch(int epoch) const;
  std::vector<PatchWindow> windows_for(const Sample& frame, Rng& rng) const;
  std::int64_t steps_in_epoch(const std::vector<WorkItem>& plan) const;
  double train_global(const std::vector<std::size_t>& images, int epoch);
  double train_patches(const Sample& frame, std::span<const PatchWindow> windows);
  double train_fused(const Sample& frame, std::span<const PatchWindow> windows);
  double finish_step(double data_loss);
  std::optional<double> validate();

  Stage stage_;
  const DatasetManifest& manifest_;
  const RunConfig& cfg_;
  FusedModel model_;
  std::vector<Sample> train_frames_;
  std::vector<Sample> val_frames_;
  std::vector<Parameter*> trainable_;
  std::unique_ptr<Adam> adam_;
  PolySchedule schedule_;
  std::int64_t step_ = 0;
  int epoch_ = 0;
  bool capped_ = false;
};

std::vector<PatchWindow> StageRunner::windows_for(const Sample& frame, Rng& rng) const {
  std::vector<PatchWindow> grid = patch_grid(manifest_.geometry.frame, manifest_.geometry.patch);
  if (cfg_.positive_sampling <= 0.0) {
    std::shuffle(grid.begin(), grid.end(), rng);
    return grid;
  }
  std::vector<PatchWindow> positive;
  for (const PatchWindow& w : grid) {
    if (cv::countNonZero(frame.mask(cv::Rect(w.left, w.top, w.size, w.size))) > 0) positive.push_back(w);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<PatchWindow> out;
  out.reserve(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const bool pick_positive = !positive.empty() && unit(rng) < cfg_.positive_sampling;
    const auto& pool = pick_positive ? positive : grid;
    out.push_back(pool[rng() % pool.size()]);
  }
  return out;
}

std::vector<StageRunner::WorkItem> StageRunner::plan_epoch(int epoch) const {
  Rng rng(mix_seed(cfg_.data_seed, 1000003ULL * static_cast<std::uint64_t>(epoch) + static_cast<std::uint64_t>(stage_)));
  std::vector<std::size_t> order(train_frames_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<WorkItem> plan;
  for (std::size_t idx : order) {
    WorkItem item{idx, {}};
    if (stage_ != Stage::kPretrainGlobal) item.windows = windows_for(train_frames_[idx], rng);
    plan.push_back(std::move(item));
  }
  return plan;
}

std::int64_t StageRunner::steps_in_epoch(const std::vector<WorkItem>& plan) const {
  const int batch = cfg_.stage(stage_).batch;
  if (stage_ == Stage::kPretrainGlobal) {
    return (static_cast<std::int64_t>(plan.size()) + batch - 1) / batch;
  }
  std::int64_t steps = 0;
  for (const WorkItem& item : plan) steps += (static_cast<std::int64_t>(item.windows.size()) + batch - 1) / batch;
  return steps;
}

double StageRunner::finish_step(double data_loss) {
  const double loss = data_loss + cfg_.loss.lambda3 * l2_penalty(trainable_);
  if (!std::isfinite(loss)) {
    throw Error(ErrorKind::kDiverged, "training diverged in " + to_string(stage_) + " at epoch " +
                                          std::to_string(epoch_) + ", step " + std::to_string(step_) +
                                          ": loss is " + std::to_string(loss));
  }
  add_l2_gradient(trainable_, cfg_.loss.lambda3);
  adam_->step(schedule_.at(step_));
  ++step_;
  if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) capped_ = true;
  return loss;
}

double StageRunner::train_global(const std::vector<std::size_t>& images, int epoch) {
  const FrameSize gsize = manifest_.geometry.global;
  Tensor x(static_cast<int>(images.size()), 3, gsize.height, gsize.width);
  std::vector<std::uint8_t> labels;
  for (std::size_t k = 0; k < images.size(); ++k) {
    AugmentSpec spec = cfg_.augment;
    spec.mode = AugmentMode::kFree;
    spec.seed = mix_seed(cfg_.data_seed, mix_seed(static_cast<std::uint64_t>(epoch), images[k]));
    const Sample g = make_global_input(augment(train_frames_[images[k]], spec), gsize);
    image_to_tensor(g.image, x, static_cast<int>(k));
    append_labels(g.mask, labels);
  }
  adam_->zero_grad();
  UNet& net = model_.global_net();
  UNet::Pass pass = net.run(x, Mode::kTrain);
  Tensor d;
  const double ce = batch_weighted_ce(pass.logits, labels, cfg_.balance.gamma, d);
  net.backward(nullptr, &d);
  return finish_step(ce);
}

double StageRunner::train_patches(const Sample& frame, std::span<const PatchWindow> windows) {
  const int p = manifest_.geometry.patch;
  Tensor x(static_cast<int>(windows.size()), 3, p, p);
  std::vector<std::uint8_t> labels;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const Sample patch = extract_patch(frame, windows[k]);
    image_to_tensor(patch.image, x, static_cast<int>(k));
    append_labels(patch.mask, labels);
  }
  adam_->zero_grad();
  UNet& net = model_.local_net();
  UNet::Pass pass = net.run(x, Mode::kTrain);
  Tensor d;
  const double ce = batch_weighted_ce(pass.logits, labels, cfg_.balance.gamma, d);
  net.backward(nullptr, &d);
  return finish_step(ce);
}

double StageRunner::train_fused(const Sample& frame, std::span<const PatchWindow> windows) {
  const Sample global = make_global_input(frame, manifest_.geometry.global);
  Tensor xg = image_to_tensor(global.image);
  std::vector<std::uint8_t> global_labels;
  append_labels(global.mask, global_labels);

  const int p = manifest_.geometry.patch;
  Tensor xl(static_cast<int>(windows.size()), 3, p, p);
  std::vector<std::uint8_t> local_labels;
  std::vector<FusedItem> items;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const Sample patch = extract_patch(frame, windows[k]);
    image_to_tensor(patch.image, xl, static_cast<int>(k));
    append_labels(patch.mask, local_labels);
    items.push_back({0, windows[k]});
  }
  const bool finetune = stage_ == Stage::kFinetuneAll;
  const FusedModes modes = finetune ? FusedModes::all(Mode::kTrain)
                                    : FusedModes{Mode::kEval, Mode::kEval, Mode::kTrain};
  adam_->zero_grad();
  FusedPass pass = model_.forward(xg, xl, items, modes);
  Tensor d_global;
  Tensor d_local;
  const double lg = batch_weighted_ce(pass.global_logits, global_labels, cfg_.balance.gamma, d_global,
                                      cfg_.loss.lambda1);
  const double ll = batch_weighted_ce(pass.logits, local_labels, cfg_.balance.gamma, d_local,
                                      cfg_.loss.lambda2);
  model_.backward(&d_global, d_local, finetune);
  return finish_step(cfg_.loss.lambda1 * lg + cfg_.loss.lambda2 * ll);
}

std::optional<double> StageRunner::validate() {
  if (val_frames_.empty()) return std::nullopt;
  PRAccumulator acc;
  for (const Sample& s : val_frames_) {
    ProbabilityMap map;
    switch (stage_) {
      case Stage::kPretrainGlobal: map = infer_global(model_, s.image, manifest_.geometry.global); break;
      case Stage::kPretrainLocal: map = infer_local(model_, s.image, cfg_.infer_batch); break;
      default: map = infer_full(model_, s.image, manifest_.geometry.global, cfg_.infer_batch); break;
    }
    std::vector<std::uint8_t> truth;
    append_labels(s.mask, truth);
    acc.add(map.values, truth);
  }
  if (acc.positives() == 0) return std::nullopt;
  return acc.curve().aupr;
}

StageReport StageRunner::run(const EpochCallback& on_epoch) {
  cfg_.validate();
  require(manifest_.geometry.frame == cfg_.geometry.frame && manifest_.geometry.patch == cfg_.geometry.patch &&
              manifest_.geometry.global == cfg_.geometry.global,
          "dataset geometry does not match the run configuration");
  prepare_stage_model(model_, stage_, cfg_);

  const auto [train_ids, val_ids] = validation_split(manifest_, cfg_);
  require(!train_ids.empty(), "no training images left after the validation split");
  for (const std::string& id : train_ids) train_frames_.push_back(load_frame(manifest_, id));
  for (const std::string& id : val_ids) val_frames_.push_back(load_frame(manifest_, id));

  const std::set<std::string> mask = freeze_mask(model_, stage_);
  for (Parameter* p : model_.parameters()) {
    if (mask.count(p->name)) trainable_.push_back(p);
  }
  adam_ = std::make_unique<Adam>(trainable_);

  const StageSettings& settings = cfg_.stage(stage_);
  std::vector<std::vector<WorkItem>> plans;
  std::int64_t total = 0;
  for (int e = 0; e < settings.epochs; ++e) {
    plans.push_back(plan_epoch(e));
    total += steps_in_epoch(plans.back());
  }
  schedule_ = {settings.lr, cfg_.lr_power, std::max<std::int64_t>(1, total)};

  const fs::path run_dir(cfg_.run_dir);
  fs::create_directories(run_dir);
  {
    std::ofstream resolved(run_dir / "config.resolved.toml");
    resolved << cfg_.to_text();
  }
  const fs::path csv = run_dir / "metrics.csv";
  const bool fresh_csv = !fs::exists(csv);
  std::ofstream log(csv, std::ios::app);
  if (fresh_csv) log << "epoch,stage,lr,loss,val_aupr\n";

  StageReport report;
  report.stage = stage_;
  std::optional<double> best;
  std::optional<Snapshot> best_state;
  int since_best = 0;
  const int batch = settings.batch;

  for (int e = 0; e < settings.epochs && !capped_; ++e) {
    epoch_ = e;
    EpochRecord rec;
    rec.epoch = e;
    rec.stage = stage_;
    rec.lr = schedule_.at(step_);
    double loss_sum = 0.0;
    std::int64_t batches = 0;
    const std::vector<WorkItem>& plan = plans[e];
    if (stage_ == Stage::kPretrainGlobal) {
      for (std::size_t start = 0; start < plan.size() && !capped_; start += batch) {
        std::vector<std::size_t> images;
        for (std::size_t k = start; k < std::min(plan.size(), start + batch); ++k) images.push_back(plan[k].image);
        loss_sum += train_global(images, e);
        ++batches;
      }
    } else {
      for (const WorkItem& item : plan) {
        if (capped_) break;
        Sample frame = train_frames_[item.image];
        AugmentSpec spec = cfg_.augment;
        spec.seed = mix_seed(cfg_.data_seed, mix_seed(static_cast<std::uint64_t>(e), item.image));
        if (stage_ == Stage::kPretrainLocal) {
          spec.mode = AugmentMode::kFree;
        } else {
          spec = AugmentSpec::aligned(spec.seed);
          spec.flip_horizontal = cfg_.augment.flip_horizontal;
          spec.flip_vertical = cfg_.augment.flip_vertical;
        }
        frame = augment(frame, spec);
        for (std::size_t start = 0; start < item.windows.size() && !capped_; start += batch) {
          const std::size_t count = std::min<std::size_t>(batch, item.windows.size() - start);
          std::span<const PatchWindow> windows(item.windows.data() + start, count);
          loss_sum += stage_ == Stage::kPretrainLocal ? train_patches(frame, windows) : train_fused(frame, windows);
          ++batches;
        }
      }
    }
    rec.loss = batches > 0 ? loss_sum / batches : 0.0;
    rec.val_aupr = validate();
    log << rec.epoch << "," << to_string(stage_) << "," << rec.lr << "," << rec.loss << ",";
    if (rec.val_aupr) log << *rec.val_aupr;
    log << "\n";
    log.flush();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_aupr) {
      if (!best || *rec.val_aupr > *best) {
        best = rec.val_aupr;
        best_state = take_snapshot(model_);
        since_best = 0;
      } else if (++since_best >= cfg_.patience) {
        break;
      }
    }
  }
  if (best_state) put_snapshot(model_, *best_state);

  report.steps = step_;
  report.checkpoint = checkpoint_path(cfg_, stage_);
  save_checkpoint(report.checkpoint, capture(model_, stage_, cfg_, adam_.get()));

  std::ofstream runlog(run_dir / "run.log", std::ios::app);
  runlog << "stage=" << to_string(stage_) << " fingerprint=" << cfg_.fingerprint()
         << " epochs=" << report.epochs.size() << " steps=" << step_
         << " checkpoint=" << report.checkpoint.string() << "\n";
  return report;
}

}  // namespace

StageReport run_stage(Stage stage, const DatasetManifest& manifest, const RunConfig& cfg,
                      const EpochCallback& on_epoch) {
  StageRunner runner(stage, manifest, cfg);
  return runner.run(on_epoch);
}

}  // namespace lgunet
