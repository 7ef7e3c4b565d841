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

#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "error.hpp"
#include "json.hpp"

namespace lgunet {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Stream stream) {
  switch (stream) {
    case Stream::kFused: return "fused";
    case Stream::kGlobal: return "global";
    case Stream::kLocal: return "local";
  }
  return "?";
}

Stream parse_stream(const std::string& text) {
  if (text == "fused") return Stream::kFused;
  if (text == "global") return Stream::kGlobal;
  if (text == "local") return Stream::kLocal;
  throw_invalid("unknown stream '" + text + "' (expected fused, global or local)");
}

LoadedModel load_model(const fs::path& checkpoint) {
  Checkpoint ck = load_checkpoint(checkpoint);
  LoadedModel out;
  out.config = config_from_text(ck.config_text, checkpoint.string());
  if (out.config.fingerprint() != ck.fingerprint) {
    throw_data(checkpoint.string() + ": embedded config does not reproduce the recorded fingerprint");
  }
  out.model = std::make_unique<FusedModel>(out.config.model_config());
  restore(*out.model, ck);
  out.stage = ck.stage;
  out.fingerprint = ck.fingerprint;
  out.path = checkpoint;
  return out;
}

fs::path latest_checkpoint(const RunConfig& cfg) {
  for (auto it = std::rbegin(kAllStages); it != std::rend(kAllStages); ++it) {
    const fs::path p = checkpoint_path(cfg, *it);
    if (fs::exists(p)) return p;
  }
  throw Error(ErrorKind::kPrerequisite,
              "no checkpoint found under " + (fs::path(cfg.run_dir) / "checkpoints").string());
}

ProbabilityMap predict_frame(LoadedModel& loaded, const cv::Mat& frame_image, Stream stream, int batch) {
  const FrameSize global = loaded.config.geometry.global;
  ProbabilityMap map;
  switch (stream) {
    case Stream::kFused: map = infer_full(*loaded.model, frame_image, global, batch); break;
    case Stream::kGlobal: map = infer_global(*loaded.model, frame_image, global); break;
    case Stream::kLocal: map = infer_local(*loaded.model, frame_image, batch); break;
  }
  map.provenance = loaded.fingerprint;
  return map;
}

void append_run_log(const fs::path& dir, const std::string& command, const std::string& fingerprint,
                    const std::string& details) {
  fs::create_directories(dir);
  std::ofstream log(dir / "run.log", std::ios::app);
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  log << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << " " << command << " fingerprint=" << fingerprint;
  if (!details.empty()) log << " " << details;
  log << "\n";
}

namespace {

void write_resolved(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.resolved.toml");
  out << cfg.to_text();
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + (dir / "config.resolved.toml").string());
}

cv::Mat read_frame_image(const fs::path& path, FrameSize frame) {
  cv::Mat image = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (image.empty()) throw_data("cannot decode image " + path.string());
  if (image.rows < frame.height || image.cols < frame.width) {
    throw_data(path.string() + " is " + std::to_string(image.rows) + "x" + std::to_string(image.cols) +
               ", smaller than the " + frame.str() + " frame");
  }
  const auto [top, left] = center_crop_offsets({image.rows, image.cols}, frame);
  return image(cv::Rect(left, top, frame.width, frame.height)).clone();
}

const std::vector<std::string>& split_ids(const DatasetManifest& m, const std::string& split) {
  if (split == "train") return m.train_ids;
  if (split == "test") return m.test_ids;
  throw_invalid("unknown split '" + split + "' (expected train or test)");
}

}  // namespace

DatasetManifest cmd_synth(const SynthRequest& request) {
  require(request.n_images > 0, "synth: image count must be positive");
  require(request.n_test >= 0 && request.n_test < request.n_images,
          "synth: test count must be in [0, n)");
  if (fs::exists(request.out) && !fs::is_empty(request.out)) {
    throw_invalid("synth: output directory " + request.out.string() + " exists and is not empty");
  }
  DatasetManifest m = synth_dataset(request.kind, request.n_images, request.n_test, request.geometry,
                                    request.seed, request.lesion_class, request.out);
  std::ostringstream details;
  details << "kind=" << to_string(request.kind) << " n=" << request.n_images << " test=" << request.n_test
          << " seed=" << request.seed << " class=" << to_string(request.lesion_class);
  append_run_log(request.out, "synth", "-", details.str());
  return m;
}

PrepareReport cmd_prepare(const RunConfig& cfg, std::optional<double> test_fraction) {
  cfg.validate();
  PrepareReport report;
  DatasetManifest probe;
  probe.root = cfg.data_root;
  probe.lesion_class = cfg.lesion_class;
  probe.geometry = cfg.geometry;
  if (!fs::exists(probe.split_path())) {
    if (!test_fraction) {
      throw_data("missing split file " + probe.split_path().string() +
                 "; pass a test fraction to create one");
    }
    require(*test_fraction >= 0.0 && *test_fraction < 1.0, "prepare: test fraction must be in [0, 1)");
    const fs::path images = probe.root / "images";
    if (!fs::is_directory(images)) throw_data("missing image directory " + images.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(images)) {
      if (!entry.is_regular_file()) continue;
      const std::string id = entry.path().stem().string();
      if (fs::exists(probe.mask_path(id))) ids.push_back(id);
    }
    if (ids.empty()) throw_data("no image under " + images.string() + " has a " + to_string(cfg.lesion_class) + " mask");
    std::sort(ids.begin(), ids.end());
    std::vector<std::string> shuffled = ids;
    Rng rng(mix_seed(cfg.data_seed, 0x7370ULL));
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::floor(ids.size() * *test_fraction));
    probe.test_ids.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_test));
    probe.train_ids.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_test), shuffled.end());
    std::sort(probe.test_ids.begin(), probe.test_ids.end());
    std::sort(probe.train_ids.begin(), probe.train_ids.end());
    write_split(probe);
    report.wrote_split = true;
  }
  report.manifest = load_manifest(cfg.data_root, cfg.lesion_class, cfg.geometry);
  std::uint64_t positives = 0;
  std::uint64_t pixels = 0;
  for (const auto* ids : {&report.manifest.train_ids, &report.manifest.test_ids}) {
    for (const std::string& id : *ids) {
      const Sample s = load_sample(report.manifest, id);
      if (s.size() != cfg.geometry.source && (s.image.rows < cfg.geometry.frame.height ||
                                              s.image.cols < cfg.geometry.frame.width)) {
        throw_data("image '" + id + "' is " + s.size().str() + ", smaller than the " +
                   cfg.geometry.frame.str() + " frame");
      }
      const Sample f = center_crop(s, cfg.geometry.frame);
      positives += static_cast<std::uint64_t>(cv::countNonZero(f.mask));
      pixels += f.mask.total();
    }
  }
  std::ostringstream os;
  os << "dataset " << report.manifest.root.string() << " class " << to_string(cfg.lesion_class) << ": "
     << report.manifest.train_ids.size() << " train, " << report.manifest.test_ids.size() << " test, "
     << "positive fraction " << std::setprecision(4)
     << (pixels ? static_cast<double>(positives) / static_cast<double>(pixels) : 0.0)
     << (report.wrote_split ? " (split written)" : "");
  report.summary = os.str();
  append_run_log(cfg.run_dir, "prepare", cfg.fingerprint(), report.summary);
  return report;
}

StageReport cmd_train(Stage stage, const RunConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const DatasetManifest manifest = load_manifest(cfg.data_root, cfg.lesion_class, cfg.geometry);
  return run_stage(stage, manifest, cfg, on_epoch);
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(8) << "class" << std::setw(8) << "stream" << std::setw(7) << "split"
     << std::setw(8) << "images" << std::setw(14) << "pooled_aupr" << "mean_image_aupr\n";
  for (const EvalRow& r : rows) {
    os << std::left << std::setw(8) << to_string(r.lesion_class) << std::setw(8) << to_string(r.stream)
       << std::setw(7) << r.split << std::setw(8) << r.images << std::setw(14) << std::fixed
       << std::setprecision(6) << r.pooled_aupr;
    if (r.mean_image_aupr) os << *r.mean_image_aupr;
    else os << "n/a";
    if (r.quantized) os << "  (16-bit pooled)";
    os << "\n";
  }
  return os.str();
}

EvalReport cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const std::string& split,
                    const std::vector<Stream>& streams) {
  require(!streams.empty(), "eval: no stream selected");
  LoadedModel loaded = load_model(checkpoint);
  const RunConfig& mcfg = loaded.config;
  const DatasetManifest manifest = load_manifest(cfg.data_root, mcfg.lesion_class, mcfg.geometry);
  const std::vector<std::string>& ids = split_ids(manifest, split);
  if (ids.empty()) throw_data("split '" + split + "' of " + manifest.split_path().string() + " is empty");

  const FrameSize frame = mcfg.geometry.frame;
  const std::uint64_t total = static_cast<std::uint64_t>(ids.size()) * frame.height * frame.width;
  const bool quantized = total > (1ULL << 26);

  struct Acc {
    PRAccumulator exact;
    QuantizedPRAccumulator levels;
    std::vector<ImageScore> images;
  };
  std::vector<Acc> accs(streams.size());
  for (const std::string& id : ids) {
    const Sample s = load_frame(manifest, id);
    std::vector<std::uint8_t> truth;
    append_labels(s.mask, truth);
    const bool has_positive = std::find(truth.begin(), truth.end(), 1) != truth.end();
    for (std::size_t k = 0; k < streams.size(); ++k) {
      const ProbabilityMap map = predict_frame(loaded, s.image, streams[k], cfg.infer_batch);
      if (quantized) accs[k].levels.add(quantize16(map), truth);
      else accs[k].exact.add(map.values, truth);
      ImageScore score{id, std::nullopt};
      if (has_positive) score.aupr = pr_curve(map.values, truth).aupr;
      accs[k].images.push_back(score);
    }
  }

  EvalReport report;
  report.checkpoint = checkpoint.string();
  for (std::size_t k = 0; k < streams.size(); ++k) {
    EvalRow row;
    row.stream = streams[k];
    row.lesion_class = mcfg.lesion_class;
    row.split = split;
    row.images = ids.size();
    row.quantized = quantized;
    if (!quantized && accs[k].exact.positives() == 0) {
      throw_data("split '" + split + "' has no positive " + to_string(mcfg.lesion_class) + " pixel");
    }
    row.pooled_aupr = quantized ? accs[k].levels.curve().aupr : accs[k].exact.curve().aupr;
    double sum = 0.0;
    int n = 0;
    for (const ImageScore& s : accs[k].images) {
      if (s.aupr) {
        sum += *s.aupr;
        ++n;
      }
    }
    if (n > 0) row.mean_image_aupr = sum / n;
    report.rows.push_back(row);
    report.per_image.emplace_back(streams[k], std::move(accs[k].images));
  }
  std::ostringstream details;
  details << "checkpoint=" << checkpoint.string() << " split=" << split;
  for (const EvalRow& r : report.rows) details << " " << to_string(r.stream) << "=" << r.pooled_aupr;
  append_run_log(cfg.run_dir, "eval", loaded.fingerprint, details.str());
  return report;
}

std::vector<fs::path> cmd_infer(const RunConfig& cfg, const InferRequest& request) {
  require(!request.images.empty(), "infer: no input image");
  LoadedModel loaded = load_model(request.checkpoint);
  fs::create_directories(request.out);
  write_resolved(request.out, loaded.config);
  std::vector<fs::path> written;
  const std::string cls = to_string(loaded.config.lesion_class);
  for (const fs::path& image_path : request.images) {
    const cv::Mat frame = read_frame_image(image_path, loaded.config.geometry.frame);
    const ProbabilityMap map = predict_frame(loaded, frame, request.stream, cfg.infer_batch);
    const std::string id = image_path.stem().string();
    const fs::path png = request.out / (id + "_" + cls + ".png");
    const fs::path sidecar = request.out / (id + "_" + cls + ".json");
    json prov;
    prov["id"] = id;
    prov["source"] = image_path.string();
    prov["lesion_class"] = cls;
    prov["stream"] = to_string(request.stream);
    prov["checkpoint"] = request.checkpoint.string();
    prov["stage"] = to_string(loaded.stage);
    prov["fingerprint"] = loaded.fingerprint;
    prov["frame"] = {map.height, map.width};
    prov["encoding"] = "uint16 png, probability = level / 65535";
    save_probability_map(map, png, sidecar, prov.dump(2));
    written.push_back(png);
  }
  append_run_log(request.out, "infer", loaded.fingerprint,
                 "checkpoint=" + request.checkpoint.string() + " images=" + std::to_string(written.size()) +
                     " stream=" + to_string(request.stream));
  return written;
}

void render_pr_plot(const PRCurve& curve, const std::string& title, const fs::path& png) {
  constexpr int kSize = 480;
  constexpr int kMargin = 50;
  const int span = kSize - 2 * kMargin;
  cv::Mat canvas(kSize, kSize, CV_8UC3, cv::Scalar(255, 255, 255));
  auto to_px = [&](double recall, double precision) {
    return cv::Point(kMargin + static_cast<int>(std::lround(recall * span)),
                     kSize - kMargin - static_cast<int>(std::lround(precision * span)));
  };
  for (int i = 0; i <= 10; ++i) {
    const double v = i / 10.0;
    cv::line(canvas, to_px(v, 0), to_px(v, 1), cv::Scalar(230, 230, 230));
    cv::line(canvas, to_px(0, v), to_px(1, v), cv::Scalar(230, 230, 230));
  }
  cv::rectangle(canvas, to_px(0, 1), to_px(1, 0), cv::Scalar(0, 0, 0));
  // Step curve: precision P_i holds over (R_{i-1}, R_i].
  double prev_r = 0.0;
  for (const PRPoint& p : curve.points) {
    if (p.recall > prev_r) {
      cv::line(canvas, to_px(prev_r, p.precision), to_px(p.recall, p.precision), cv::Scalar(180, 60, 20), 2);
    }
    prev_r = p.recall;
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const PRPoint& a = curve.points[i - 1];
    const PRPoint& b = curve.points[i];
    if (b.recall > a.recall) {
      cv::line(canvas, to_px(a.recall, a.precision), to_px(a.recall, b.precision), cv::Scalar(180, 60, 20), 2);
    }
  }
  std::ostringstream label;
  label << title << "  AUPR " << std::fixed << std::setprecision(4) << curve.aupr;
  cv::putText(canvas, label.str(), {kMargin, kMargin - 18}, cv::FONT_HERSHEY_SIMPLEX, 0.55, {0, 0, 0}, 1,
              cv::LINE_AA);
  cv::putText(canvas, "recall", {kSize / 2 - 25, kSize - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0}, 1,
              cv::LINE_AA);
  cv::putText(canvas, "precision", {5, kMargin - 2}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1,
              cv::LINE_AA);
  if (!cv::imwrite(png.string(), canvas)) throw Error(ErrorKind::kIo, "cannot write " + png.string());
}

std::vector<CurveResult> cmd_curves(const RunConfig& cfg, const CurvesRequest& request) {
  if (!fs::is_directory(request.predictions)) {
    throw_data("prediction directory " + request.predictions.string() + " does not exist");
  }
  std::map<LesionClass, std::vector<std::pair<std::string, fs::path>>> found;
  for (const auto& entry : fs::directory_iterator(request.predictions)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    const auto sep = stem.rfind('_');
    if (sep == std::string::npos) continue;
    for (LesionClass c : {LesionClass::kEX, LesionClass::kMA, LesionClass::kHE, LesionClass::kSE}) {
      if (stem.substr(sep + 1) == to_string(c)) found[c].emplace_back(stem.substr(0, sep), entry.path());
    }
  }
  if (found.empty()) {
    throw_data("no <id>_<CLASS>.png maps under " + request.predictions.string());
  }
  fs::create_directories(request.out);
  std::vector<CurveResult> results;
  for (auto& [cls, maps] : found) {
    std::sort(maps.begin(), maps.end());
    const DatasetManifest manifest = load_manifest(cfg.data_root, cls, cfg.geometry);
    const std::vector<std::string>& ids = split_ids(manifest, request.split);
    std::map<std::string, fs::path> by_id(maps.begin(), maps.end());
    QuantizedPRAccumulator acc;
    std::size_t used = 0;
    for (const std::string& id : ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw_data("no " + to_string(cls) + " prediction for " + request.split + " id '" + id + "' in " +
                   request.predictions.string());
      }
      FrameSize size;
      const std::vector<std::uint16_t> levels = load_probability_levels(it->second, &size);
      const Sample s = load_frame(manifest, id);
      if (size != s.size()) {
        throw_data(it->second.string() + " is " + size.str() + ", expected " + s.size().str());
      }
      std::vector<std::uint8_t> truth;
      append_labels(s.mask, truth);
      acc.add(levels, truth);
      ++used;
    }
    CurveResult r;
    r.lesion_class = cls;
    r.images = used;
    r.curve = acc.curve(request.rule);
    r.csv = request.out / ("pr_" + to_string(cls) + ".csv");
    r.plot = request.out / ("pr_" + to_string(cls) + ".png");
    std::ofstream csv(r.csv);
    csv << "threshold,precision,recall\n" << std::setprecision(17);
    for (const PRPoint& p : r.curve.points) csv << p.threshold << "," << p.precision << "," << p.recall << "\n";
    if (!csv) throw Error(ErrorKind::kIo, "cannot write " + r.csv.string());
    render_pr_plot(r.curve, to_string(cls) + " " + request.split, r.plot);
    results.push_back(r);
  }
  std::ofstream table(request.out / "scores.csv");
  table << "class,images,aupr\n" << std::setprecision(10);
  for (const CurveResult& r : results) table << to_string(r.lesion_class) << "," << r.images << "," << r.curve.aupr << "\n";
  write_resolved(request.out, cfg);
  append_run_log(request.out, "curves", cfg.fingerprint(), "predictions=" + request.predictions.string());
  return results;
}

std::string score_table(const std::vector<CurveResult>& results) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "class" << std::setw(8) << "images" << "aupr\n";
  for (const CurveResult& r : results) {
    os << std::left << std::setw(8) << to_string(r.lesion_class) << std::setw(8) << r.images << std::fixed
       << std::setprecision(6) << r.curve.aupr << "\n";
  }
  return os.str();
}

}  // namespace lgunet
