#include "commands.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mono3d/autolabel.h"
#include "mono3d/box_metrics.h"
#include "mono3d/geometry.h"
#include "mono3d/kitti_io.h"
#include "mono3d/shape_model.h"
#include "mono3d/silhouette.h"
#include "mono3d/synthetic.h"
#include "mono3d/text_util.h"

namespace mono3d::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct CommonOptions {
  std::uint64_t seed = 0;
  std::string out;
  int jobs = 1;
  std::string format = "text";
  std::string config_path;
};

// Per-object bookkeeping for the run manifest.
struct ObjectStatus {
  std::string id;
  int exit_code = 0;
  std::string message;
};

json Vec3Json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 JsonVec3(const json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

json PoseJson(const Pose& pose) {
  return {{"yaw", pose.yaw}, {"pitch", pose.pitch}, {"roll", pose.roll}, {"t", Vec3Json(pose.t)}};
}

Pose JsonPose(const json& j) {
  Pose pose;
  pose.yaw = j.at("yaw").get<double>();
  pose.pitch = j.at("pitch").get<double>();
  pose.roll = j.at("roll").get<double>();
  pose.t = JsonVec3(j.at("t"));
  return pose;
}

json BoxJson(const Box3D& box) {
  return {{"center", Vec3Json(box.center)},
          {"dims", json::array({box.dims.l, box.dims.w, box.dims.h})},
          {"yaw", box.yaw}};
}

Box3D JsonBox(const json& j) {
  Box3D box;
  box.center = JsonVec3(j.at("center"));
  const json& d = j.at("dims");
  box.dims = Dimensions{d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()};
  box.yaw = j.at("yaw").get<double>();
  return box;
}

json CoeffJson(const ShapeCoeff& s) {
  json out = json::array();
  for (Eigen::Index i = 0; i < s.size(); ++i) out.push_back(s(i));
  return out;
}

ShapeCoeff JsonCoeff(const json& j) {
  ShapeCoeff s(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) s(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  return s;
}

std::vector<double> ParseList(const std::string& text, const std::string& what) {
  std::vector<double> values;
  std::string field;
  std::istringstream in(text);
  while (std::getline(in, field, ',')) {
    double value = 0.0;
    if (!ParseDouble(field, &value)) {
      throw Error(ErrorCode::kMalformedLine, "bad number '" + field + "' in " + what);
    }
    values.push_back(value);
  }
  return values;
}

std::vector<int> ParseIndexList(const std::string& text) {
  std::vector<int> values;
  std::string field;
  std::istringstream in(text);
  while (std::getline(in, field, ',')) {
    long long value = 0;
    if (!ParseInt(field, &value)) throw Error(ErrorCode::kMalformedLine, "bad index '" + field + "'");
    values.push_back(static_cast<int>(value));
  }
  return values;
}

// Writes through a sibling temporary file so readers never see partial
// output.
void WriteAtomically(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    body(out);
    out.flush();
    if (!out) throw Error(ErrorCode::kIoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

void WriteTextFile(const fs::path& path, const std::string& text) {
  WriteAtomically(path, [&](std::ostream& out) { out << text; });
}

void CreateDirectories(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
}

std::vector<json> ReadJsonLines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::vector<json> lines;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      lines.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedLine, path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return lines;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void ParallelFor(int n, int jobs, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (int i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

std::string ObjectId(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

ShapeBasis LoadBasis(const std::string& path) {
  return path.empty() ? MakeSyntheticCarBasis() : ReadShapeBasisFile(path);
}

// First failing object's code, 0 when all succeeded.
int ExitCodeOf(const std::vector<ObjectStatus>& statuses) {
  for (const auto& s : statuses) {
    if (s.exit_code != 0) return s.exit_code;
  }
  return 0;
}

void WriteManifest(const fs::path& dir, const std::string& command,
                   const std::vector<std::string>& inputs, const CommonOptions& common,
                   const std::vector<ObjectStatus>& statuses, const json& extra = json::object()) {
  json objects = json::array();
  for (const auto& s : statuses) {
    json o = {{"id", s.id}, {"status", s.exit_code == 0 ? "ok" : "error"}};
    if (s.exit_code != 0) {
      o["exit_code"] = s.exit_code;
      o["error"] = s.message;
    }
    objects.push_back(o);
  }
  json manifest = {{"command", command},
                   {"inputs", inputs},
                   {"config", common.config_path},
                   {"seed", common.seed},
                   {"out", common.out},
                   {"objects", objects}};
  for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
  WriteTextFile(dir / "manifest.json", manifest.dump(2) + "\n");
}

// Rethrows the current exception as a (code, message) pair.
ObjectStatus CaptureFailure(const std::string& id) {
  try {
    throw;
  } catch (const Error& e) {
    return {id, static_cast<int>(e.code()), e.what()};
  } catch (const std::exception& e) {
    return {id, kExitInternal, e.what()};
  }
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  int n = 10;
  double noise_px = 0.0;
  int width = 256;
  int height = 256;
  int points = 300;
  double tilt_deg = 0.0;
  std::string basis;
};

int RunSynth(const SynthOptions& opt, const CommonOptions& common) {
  if (common.out.empty()) throw Error(ErrorCode::kIoError, "synth needs --out");
  if (opt.n < 0) throw Error(ErrorCode::kEmptyInput, "--n must be >= 0");
  const fs::path out(common.out);
  CreateDirectories(out / "objects");
  const ShapeBasis basis = LoadBasis(opt.basis);

  std::vector<std::string> truth_lines(static_cast<size_t>(opt.n));
  std::vector<std::string> record_text(static_cast<size_t>(opt.n));
  std::vector<ObjectStatus> statuses(static_cast<size_t>(opt.n));
  ParallelFor(opt.n, common.jobs, [&](int i) {
    const std::string id = ObjectId(i);
    try {
      std::seed_seq seq{common.seed, static_cast<std::uint64_t>(i)};
      synthetic::Rng rng(seq);
      synthetic::LabelingSceneOptions so;
      so.width = opt.width;
      so.height = opt.height;
      so.num_points = opt.points;
      so.ground_tilt_deg = opt.tilt_deg;
      const synthetic::LabelingScene scene = synthetic::GenerateLabelingScene(basis, rng, so);

      FitResult truth;
      truth.s = scene.s;
      truth.pose = scene.pose;
      KeypointRecord record =
          ExportKeypointLabels(truth, basis, basis.keypoints, scene.intrinsics, id);
      if (opt.noise_px > 0.0) {
        std::normal_distribution<double> noise(0.0, opt.noise_px);
        for (auto& kp : record.keypoints) kp.p2d += Vec2(noise(rng), noise(rng));
      }

      const fs::path dir = out / "objects" / id;
      CreateDirectories(dir);
      CalibSet calib;
      calib.p2.leftCols<3>() = scene.intrinsics.Matrix();
      calib.tr_velo_to_cam.leftCols<3>() = Mat3::Identity();
      WriteAtomically(dir / "calib.txt", [&](std::ostream& o) { WriteCalib(o, calib); });
      PointCloud cloud;
      for (const Vec3& p : scene.Cloud()) {
        cloud.push_back({static_cast<float>(p.x()), static_cast<float>(p.y()),
                         static_cast<float>(p.z()), 1.0f});
      }
      WriteAtomically(dir / "velodyne.bin", [&](std::ostream& o) {
        const auto bytes = SerializeVelodyne(cloud);
        o.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      });
      WriteAtomically(dir / "mask.pgm", [&](std::ostream& o) {
        const auto bytes = SerializeMask(scene.mask);
        o.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      });
      WriteTextFile(dir / "label.txt", FormatLabelLine(BoxToLabel(scene.truth_box)) + "\n");
      std::ostringstream rec;
      WriteKeypointRecords(rec, std::span<const KeypointRecord>(&record, 1));
      WriteTextFile(dir / "keypoints.txt", rec.str());
      record_text[static_cast<size_t>(i)] = rec.str();

      const json truth_json = {{"id", id},
                               {"s", CoeffJson(scene.s)},
                               {"pose", PoseJson(scene.pose)},
                               {"box", BoxJson(scene.truth_box)},
                               {"mask", "objects/" + id + "/mask.pgm"},
                               {"calib", "objects/" + id + "/calib.txt"}};
      truth_lines[static_cast<size_t>(i)] = truth_json.dump();
      statuses[static_cast<size_t>(i)] = {id, 0, ""};
    } catch (...) {
      statuses[static_cast<size_t>(i)] = CaptureFailure(id);
    }
  });

  std::string truth_all;
  std::string records_all;
  for (int i = 0; i < opt.n; ++i) {
    if (statuses[static_cast<size_t>(i)].exit_code != 0) continue;
    truth_all += truth_lines[static_cast<size_t>(i)] + "\n";
    records_all += record_text[static_cast<size_t>(i)];
  }
  WriteTextFile(out / "truth.jsonl", truth_all);
  WriteTextFile(out / "keypoints.txt", records_all);
  WriteManifest(out, "synth", {}, common, statuses,
                {{"n_objects", opt.n}, {"noise_px", opt.noise_px}, {"tilt_deg", opt.tilt_deg}});
  for (const auto& s : statuses) {
    if (s.exit_code != 0) std::cerr << s.id << ": " << s.message << "\n";
  }
  return ExitCodeOf(statuses);
}

// ---------------------------------------------------------------- solve

struct SolveOptions {
  std::vector<std::string> inputs;
  std::string zero_weights;
  std::string truth;
};

int RunSolve(const SolveOptions& opt, const CommonOptions& common) {
  const std::vector<int> zero = ParseIndexList(opt.zero_weights);
  std::vector<KeypointRecord> records;
  for (const auto& path : opt.inputs) {
    auto r = ReadKeypointFile(path);
    records.insert(records.end(), std::make_move_iterator(r.begin()),
                   std::make_move_iterator(r.end()));
  }
  std::map<std::string, Vec3> truth_t;
  if (!opt.truth.empty()) {
    for (const json& j : ReadJsonLines(opt.truth)) {
      truth_t[j.at("id").get<std::string>()] = JsonPose(j.at("pose")).t;
    }
  }

  std::vector<SolveOutcome> outcomes(records.size());
  ParallelFor(static_cast<int>(records.size()), common.jobs,
              [&](int i) { outcomes[static_cast<size_t>(i)] = SolveRecord(records[static_cast<size_t>(i)], zero); });

  std::ostringstream report;
  std::vector<ObjectStatus> statuses;
  for (const auto& o : outcomes) {
    statuses.push_back({o.id, o.exit_code, o.message});
    json j = {{"id", o.id}, {"status", o.solution ? "ok" : "error"}};
    std::optional<double> error;
    if (o.solution) {
      j["t"] = Vec3Json(o.solution->t);
      j["weighted_rms_residual"] = o.solution->weighted_rms_residual;
      j["effective_rank"] = o.solution->effective_rank;
      const auto it = truth_t.find(o.id);
      if (it != truth_t.end()) {
        error = (o.solution->t - it->second).norm();
        j["translation_error"] = *error;
      }
    } else {
      j["exit_code"] = o.exit_code;
      j["error"] = o.message;
    }
    if (common.format == "jsonl") {
      report << j.dump() << "\n";
    } else if (o.solution) {
      report << o.id << " t " << FormatDouble(o.solution->t.x()) << " "
             << FormatDouble(o.solution->t.y()) << " " << FormatDouble(o.solution->t.z())
             << " rms " << FormatDouble(o.solution->weighted_rms_residual) << " rank "
             << o.solution->effective_rank;
      if (error) report << " error " << FormatDouble(*error);
      report << "\n";
    } else {
      report << o.id << " error " << o.exit_code << " " << o.message << "\n";
    }
  }
  std::cout << report.str();
  if (!common.out.empty()) {
    const fs::path out(common.out);
    CreateDirectories(out);
    std::ostringstream lines;
    for (const auto& o : outcomes) {
      json j = {{"id", o.id}};
      if (o.solution) {
        j["t"] = Vec3Json(o.solution->t);
        j["weighted_rms_residual"] = o.solution->weighted_rms_residual;
        j["effective_rank"] = o.solution->effective_rank;
      } else {
        j["exit_code"] = o.exit_code;
        j["error"] = o.message;
      }
      lines << j.dump() << "\n";
    }
    WriteTextFile(out / "solutions.jsonl", lines.str());
    WriteManifest(out, "solve", opt.inputs, common, statuses);
  }
  for (const auto& s : statuses) {
    if (s.exit_code != 0) std::cerr << s.id << ": " << s.message << "\n";
  }
  return ExitCodeOf(statuses);
}

// ------------------------------------------------------------ autolabel

struct AutolabelOptions {
  std::vector<std::string> inputs;
  std::string basis;
  AutolabelConfig cfg;
  bool yaw_only = false;
};

struct Frame {
  std::string id;
  fs::path dir;
};

// A directory holding objects/<id>/ (synth output) expands to its object
// directories; any other directory is one frame.
std::vector<Frame> CollectFrames(const std::vector<std::string>& inputs) {
  std::vector<Frame> frames;
  for (const auto& input : inputs) {
    const fs::path dir(input);
    if (!fs::is_directory(dir)) throw Error(ErrorCode::kIoError, "not a directory: " + input);
    if (fs::is_directory(dir / "objects")) {
      std::vector<fs::path> subdirs;
      for (const auto& entry : fs::directory_iterator(dir / "objects")) {
        if (entry.is_directory()) subdirs.push_back(entry.path());
      }
      std::sort(subdirs.begin(), subdirs.end());
      for (const auto& p : subdirs) frames.push_back({p.filename().string(), p});
    } else {
      frames.push_back({dir.filename().empty() ? dir.parent_path().filename().string()
                                               : dir.filename().string(),
                        dir});
    }
  }
  return frames;
}

json FitJson(const std::string& id, const FitResult& r) {
  return {{"id", id},
          {"s", CoeffJson(r.s)},
          {"pose", PoseJson(r.pose)},
          {"box", BoxJson(r.box)},
          {"final_loss", r.final_loss},
          {"final_l2d", r.final_l2d},
          {"final_l3d", r.final_l3d},
          {"mask_iou", r.mask_iou},
          {"box_iou", r.box_iou},
          {"converged", r.converged},
          {"steps", r.steps},
          {"best_step", r.best_step},
          {"loss_curve", r.loss_curve}};
}

int RunAutolabel(const AutolabelOptions& opt, const CommonOptions& common) {
  if (common.out.empty()) throw Error(ErrorCode::kIoError, "autolabel needs --out");
  AutolabelConfig cfg = opt.cfg;
  if (opt.yaw_only) cfg.optimize_pitch_roll = false;
  cfg.Validate();
  const ShapeBasis basis = LoadBasis(opt.basis);
  const std::vector<Frame> frames = CollectFrames(opt.inputs);
  const fs::path out(common.out);
  CreateDirectories(out / "objects");

  const int n = static_cast<int>(frames.size());
  std::vector<ObjectStatus> statuses(static_cast<size_t>(n));
  std::vector<std::string> fit_lines(static_cast<size_t>(n));
  std::vector<std::string> record_text(static_cast<size_t>(n));
  ParallelFor(n, common.jobs, [&](int i) {
    const Frame& frame = frames[static_cast<size_t>(i)];
    try {
      const CalibSet calib = ReadCalibFile((frame.dir / "calib.txt").string());
      const CameraIntrinsics k = IntrinsicsFromP2(calib);
      const std::vector<KittiLabel> labels = ReadLabelFile((frame.dir / "label.txt").string());
      if (labels.empty()) throw Error(ErrorCode::kEmptyInput, "no label in " + frame.dir.string());
      const auto car = std::find_if(labels.begin(), labels.end(),
                                    [](const KittiLabel& l) { return l.type == "Car"; });
      LabelingInput input{
          VeloToCamera(ReadVelodyne((frame.dir / "velodyne.bin").string()), calib),
          ReadMask((frame.dir / "mask.pgm").string()),
          LabelToBox(car != labels.end() ? *car : labels.front())};
      const FitResult fit = LabelObject(input, basis, k, cfg, common.seed + static_cast<std::uint64_t>(i));
      const KeypointRecord record = ExportKeypointLabels(fit, basis, basis.keypoints, k, frame.id);

      const fs::path dir = out / "objects" / frame.id;
      CreateDirectories(dir);
      const json fit_json = FitJson(frame.id, fit);
      WriteTextFile(dir / "fit.json", fit_json.dump(2) + "\n");
      WriteTextFile(dir / "label.txt", FormatLabelLine(BoxToLabel(fit.box)) + "\n");
      std::ostringstream rec;
      WriteKeypointRecords(rec, std::span<const KeypointRecord>(&record, 1));
      WriteTextFile(dir / "keypoints.txt", rec.str());
      fit_lines[static_cast<size_t>(i)] = fit_json.dump();
      record_text[static_cast<size_t>(i)] = rec.str();
      statuses[static_cast<size_t>(i)] = {frame.id, 0, ""};
    } catch (...) {
      statuses[static_cast<size_t>(i)] = CaptureFailure(frame.id);
    }
  });

  std::string fits_all;
  std::string records_all;
  for (int i = 0; i < n; ++i) {
    const ObjectStatus& s = statuses[static_cast<size_t>(i)];
    if (s.exit_code == 0) {
      fits_all += fit_lines[static_cast<size_t>(i)] + "\n";
      records_all += record_text[static_cast<size_t>(i)];
    } else {
      fits_all += json({{"id", s.id}, {"status", "error"}, {"exit_code", s.exit_code},
                        {"error", s.message}}).dump() + "\n";
    }
  }
  WriteTextFile(out / "fits.jsonl", fits_all);
  WriteTextFile(out / "keypoints.txt", records_all);
  WriteManifest(out, "autolabel", opt.inputs, common, statuses,
                {{"basis", opt.basis.empty() ? "synthetic" : opt.basis},
                 {"alpha", cfg.alpha},
                 {"beta", cfg.beta},
                 {"learning_rate", cfg.learning_rate},
                 {"max_steps", cfg.max_steps},
                 {"optimize_pitch_roll", cfg.optimize_pitch_roll}});
  if (common.format == "jsonl") {
    std::cout << fits_all;
  } else {
    for (int i = 0; i < n; ++i) {
      const ObjectStatus& s = statuses[static_cast<size_t>(i)];
      if (s.exit_code != 0) {
        std::cout << s.id << " error " << s.exit_code << " " << s.message << "\n";
        continue;
      }
      const json j = json::parse(fit_lines[static_cast<size_t>(i)]);
      std::cout << s.id << " loss " << FormatDouble(j["final_loss"].get<double>()) << " mask_iou "
                << FormatDouble(j["mask_iou"].get<double>()) << " box_iou "
                << FormatDouble(j["box_iou"].get<double>()) << "\n";
    }
  }
  for (const auto& s : statuses) {
    if (s.exit_code != 0) std::cerr << s.id << ": " << s.message << "\n";
  }
  return ExitCodeOf(statuses);
}

// ----------------------------------------------------------------- eval

struct EvalOptions {
  std::string fits;
  std::string truth;
  std::string basis;
};

int RunEval(const EvalOptions& opt, const CommonOptions& common) {
  const ShapeBasis basis = LoadBasis(opt.basis);
  const SilhouetteRenderer renderer(basis.mean.faces);
  const fs::path truth_dir = fs::path(opt.truth).parent_path();
  std::map<std::string, json> truths;
  for (json& j : ReadJsonLines(opt.truth)) {
    const std::string id = j.at("id").get<std::string>();
    truths[id] = std::move(j);
  }

  std::vector<ObjectStatus> statuses;
  std::vector<Box3D> fit_boxes, truth_boxes;
  std::vector<MaskImage> fit_masks, truth_masks;
  std::vector<json> rows;
  for (const json& fit : ReadJsonLines(opt.fits)) {
    const std::string id = fit.at("id").get<std::string>();
    try {
      if (fit.contains("status") && fit["status"] == "error") {
        throw Error(static_cast<ErrorCode>(fit.value("exit_code", 0)), "fit failed: " + fit.value("error", ""));
      }
      const auto it = truths.find(id);
      if (it == truths.end()) throw Error(ErrorCode::kMissingKey, "no truth for object " + id);
      const json& truth = it->second;
      MaskImage truth_mask = ReadMask((truth_dir / truth.at("mask").get<std::string>()).string());
      const CameraIntrinsics k =
          IntrinsicsFromP2(ReadCalibFile((truth_dir / truth.at("calib").get<std::string>()).string()));
      MaskImage fit_mask = renderer.Render(DeformVertices(basis, JsonCoeff(fit.at("s"))),
                                           JsonPose(fit.at("pose")), k, truth_mask.width(),
                                           truth_mask.height(), 0.0);
      const Box3D fb = JsonBox(fit.at("box"));
      const Box3D tb = JsonBox(truth.at("box"));
      rows.push_back({{"id", id}, {"mask_iou", MaskIou(fit_mask, truth_mask)}, {"box_iou", Iou3d(fb, tb)}});
      fit_boxes.push_back(fb);
      truth_boxes.push_back(tb);
      fit_masks.push_back(std::move(fit_mask));
      truth_masks.push_back(std::move(truth_mask));
      statuses.push_back({id, 0, ""});
    } catch (...) {
      statuses.push_back(CaptureFailure(id));
    }
  }
  std::vector<LabeledObject> fits, truth_objects;
  for (size_t i = 0; i < fit_boxes.size(); ++i) {
    fits.push_back({fit_boxes[i], &fit_masks[i]});
    truth_objects.push_back({truth_boxes[i], &truth_masks[i]});
  }
  const LabelingQuality q = EvaluateLabelingQuality(fits, truth_objects);
  const json summary = {{"summary", true},
                        {"objects", fits.size()},
                        {"failed", statuses.size() - fits.size()},
                        {"mean_mask_iou", q.mean_mask_iou},
                        {"mean_box_iou", q.mean_box_iou}};
  std::ostringstream report;
  if (common.format == "jsonl") {
    for (const json& r : rows) report << r.dump() << "\n";
    report << summary.dump() << "\n";
  } else {
    for (const json& r : rows) {
      report << r["id"].get<std::string>() << " mask_iou " << FormatDouble(r["mask_iou"].get<double>())
             << " box_iou " << FormatDouble(r["box_iou"].get<double>()) << "\n";
    }
    report << "mean_mask_iou " << FormatDouble(q.mean_mask_iou) << " mean_box_iou "
           << FormatDouble(q.mean_box_iou) << " objects " << fits.size() << "\n";
  }
  std::cout << report.str();
  if (!common.out.empty()) {
    const fs::path out(common.out);
    CreateDirectories(out);
    std::string lines;
    for (const json& r : rows) lines += r.dump() + "\n";
    lines += summary.dump() + "\n";
    WriteTextFile(out / "eval.jsonl", lines);
    WriteManifest(out, "eval", {opt.fits, opt.truth}, common, statuses);
  }
  for (const auto& s : statuses) {
    if (s.exit_code != 0) std::cerr << s.id << ": " << s.message << "\n";
  }
  return ExitCodeOf(statuses);
}

// --------------------------------------------------------------- render

struct RenderOptions {
  std::string basis;
  std::string coeffs;
  std::string pose;
  std::string calib;
  std::string intrinsics;
  int width = 256;
  int height = 256;
  double softness = 0.0;
};

int RunRender(const RenderOptions& opt, const CommonOptions& common) {
  if (common.out.empty()) throw Error(ErrorCode::kIoError, "render needs --out <file.pgm>");
  const ShapeBasis basis = LoadBasis(opt.basis);
  ShapeCoeff s = ShapeCoeff::Zero(basis.num_components());
  if (!opt.coeffs.empty()) {
    const auto values = ParseList(opt.coeffs, "--coeffs");
    if (static_cast<int>(values.size()) != basis.num_components()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "--coeffs needs " + std::to_string(basis.num_components()) + " values");
    }
    for (size_t i = 0; i < values.size(); ++i) s(static_cast<Eigen::Index>(i)) = values[i];
  }
  const auto p = ParseList(opt.pose, "--pose");
  if (p.size() != 6) throw Error(ErrorCode::kDimensionMismatch, "--pose needs yaw,pitch,roll,tx,ty,tz");
  Pose pose;
  pose.yaw = p[0];
  pose.pitch = p[1];
  pose.roll = p[2];
  pose.t = Vec3(p[3], p[4], p[5]);
  CameraIntrinsics k;
  if (!opt.calib.empty()) {
    k = IntrinsicsFromP2(ReadCalibFile(opt.calib));
  } else if (!opt.intrinsics.empty()) {
    const auto v = ParseList(opt.intrinsics, "--intrinsics");
    if (v.size() != 4) throw Error(ErrorCode::kDimensionMismatch, "--intrinsics needs fx,fy,cx,cy");
    k = CameraIntrinsics{v[0], v[1], v[2], v[3]};
  } else {
    k = synthetic::LabelingIntrinsics(opt.width, opt.height);
  }
  const SilhouetteRenderer renderer(basis.mean.faces);
  const MaskImage mask =
      renderer.Render(DeformVertices(basis, s), pose, k, opt.width, opt.height, opt.softness);
  WriteAtomically(common.out, [&](std::ostream& o) {
    const auto bytes = SerializeMask(mask);
    o.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  });
  std::cout << "wrote " << common.out << " occupied " << mask.CountOccupied() << "\n";
  return 0;
}

// ---------------------------------------------------------- noise-sweep

struct SweepOptions {
  std::string input;
  std::string sigmas = "0,0.5,1,2,4";
  int trials = 100;
};

int RunNoiseSweep(const SweepOptions& opt, const CommonOptions& common) {
  if (opt.trials < 1) throw Error(ErrorCode::kEmptyInput, "--trials must be >= 1");
  const std::vector<double> sigmas = ParseList(opt.sigmas, "--sigmas");
  const std::vector<KeypointRecord> records = ReadKeypointFile(opt.input);
  if (records.empty()) throw Error(ErrorCode::kEmptyInput, "no keypoint records in " + opt.input);

  // Reference translations from the unperturbed keypoints.
  std::vector<Vec3> reference;
  std::vector<KeypointSet> metric;
  for (const auto& r : records) {
    metric.push_back(r.MetricKeypoints());
    reference.push_back(SolveTranslation(AssembleSystem(metric.back(), r.yaw, r.intrinsics)).t);
  }

  std::vector<json> rows;
  for (size_t si = 0; si < sigmas.size(); ++si) {
    const double sigma = sigmas[si];
    std::vector<double> errors;
    std::seed_seq seq{common.seed, static_cast<std::uint64_t>(si)};
    synthetic::Rng rng(seq);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (size_t ri = 0; ri < records.size(); ++ri) {
      for (int trial = 0; trial < opt.trials; ++trial) {
        KeypointSet noisy = metric[ri];
        for (auto& kp : noisy) kp.p2d += sigma * Vec2(noise(rng), noise(rng));
        const Vec3 t = SolveTranslation(AssembleSystem(noisy, records[ri].yaw, records[ri].intrinsics)).t;
        errors.push_back((t - reference[ri]).norm());
      }
    }
    std::sort(errors.begin(), errors.end());
    double mean = 0.0;
    for (double e : errors) mean += e;
    mean /= static_cast<double>(errors.size());
    auto quantile = [&](double q) {
      return errors[static_cast<size_t>(std::floor(q * static_cast<double>(errors.size() - 1)))];
    };
    rows.push_back({{"sigma_px", sigma},
                    {"samples", errors.size()},
                    {"mean_error", mean},
                    {"median_error", quantile(0.5)},
                    {"p95_error", quantile(0.95)},
                    {"max_error", errors.back()}});
  }
  std::ostringstream report;
  if (common.format == "jsonl") {
    for (const json& r : rows) report << r.dump() << "\n";
  } else {
    report << "sigma_px mean_m median_m p95_m max_m\n";
    for (const json& r : rows) {
      report << FormatDouble(r["sigma_px"].get<double>()) << " "
             << FormatDouble(r["mean_error"].get<double>()) << " "
             << FormatDouble(r["median_error"].get<double>()) << " "
             << FormatDouble(r["p95_error"].get<double>()) << " "
             << FormatDouble(r["max_error"].get<double>()) << "\n";
    }
  }
  std::cout << report.str();
  if (!common.out.empty()) {
    const fs::path out(common.out);
    CreateDirectories(out);
    std::string lines;
    for (const json& r : rows) lines += r.dump() + "\n";
    WriteTextFile(out / "noise_sweep.jsonl", lines);
    WriteManifest(out, "noise-sweep", {opt.input}, common, {}, {{"trials", opt.trials}});
  }
  return 0;
}

int RunBasisExport(const CommonOptions& common) {
  if (common.out.empty()) throw Error(ErrorCode::kIoError, "basis-export needs --out <file>");
  const ShapeBasis basis = MakeSyntheticCarBasis();
  WriteAtomically(common.out, [&](std::ostream& o) { WriteShapeBasis(o, basis); });
  std::cout << "wrote " << common.out << "\n";
  return 0;
}

}  // namespace

SolveOutcome SolveRecord(const KeypointRecord& record, std::span<const int> zero_weight) {
  SolveOutcome outcome;
  outcome.id = record.id;
  try {
    KeypointSet keypoints = record.MetricKeypoints();
    for (int idx : zero_weight) {
      if (idx < 0 || idx >= static_cast<int>(keypoints.size())) {
        throw Error(ErrorCode::kIndexOutOfRange,
                    "keypoint index " + std::to_string(idx) + " out of range");
      }
      keypoints[static_cast<size_t>(idx)].conf_u = 0.0;
      keypoints[static_cast<size_t>(idx)].conf_v = 0.0;
    }
    outcome.solution = SolveTranslation(AssembleSystem(keypoints, record.yaw, record.intrinsics));
  } catch (const Error& e) {
    outcome.exit_code = static_cast<int>(e.code());
    outcome.message = e.what();
  }
  return outcome;
}

int Main(int argc, char** argv) {
  CLI::App app{"Keypoint-based monocular 3D pose solving and shape auto-labeling"};
  app.require_subcommand(1);
  CommonOptions common;
  app.set_config("--config", "", "INI/TOML file of option=value pairs; flags override it");
  app.add_option("--seed", common.seed, "Seed for every stochastic step");
  app.add_option("--out", common.out, "Output directory (or file for render/basis-export)");
  app.add_option("--jobs", common.jobs, "Objects processed in parallel")->check(CLI::PositiveNumber);
  app.add_option("--format", common.format, "Report format on stdout")
      ->check(CLI::IsMember({"text", "jsonl"}));
  app.fallthrough();

  SynthOptions synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate seeded synthetic objects");
  synth_cmd->add_option("--n", synth.n, "Number of objects");
  synth_cmd->add_option("--noise-px", synth.noise_px, "Gaussian noise on 2D keypoints (px)");
  synth_cmd->add_option("--width", synth.width, "Mask width");
  synth_cmd->add_option("--height", synth.height, "Mask height");
  synth_cmd->add_option("--points", synth.points, "Object LiDAR points");
  synth_cmd->add_option("--tilt-deg", synth.tilt_deg, "Ground tilt (deg)");
  synth_cmd->add_option("--basis", synth.basis, "Shape basis file (default: built-in template)");

  SolveOptions solve;
  CLI::App* solve_cmd = app.add_subcommand("solve", "Solve translations from keypoint records");
  solve_cmd->add_option("inputs", solve.inputs, "Keypoint record files")->required();
  solve_cmd->add_option("--zero-weights", solve.zero_weights,
                        "Comma-separated keypoint indices whose weights are set to 0");
  solve_cmd->add_option("--truth", solve.truth, "truth.jsonl to report translation errors");

  AutolabelOptions autolabel;
  CLI::App* auto_cmd = app.add_subcommand("autolabel", "Fit shapes and poses to frames");
  auto_cmd->add_option("inputs", autolabel.inputs, "Frame directories or synth output")->required();
  auto_cmd->add_option("--basis", autolabel.basis, "Shape basis file (default: built-in template)");
  auto_cmd->add_option("--alpha", autolabel.cfg.alpha, "Mask loss weight");
  auto_cmd->add_option("--beta", autolabel.cfg.beta, "Point loss weight");
  auto_cmd->add_option("--learning-rate", autolabel.cfg.learning_rate, "Adam learning rate");
  auto_cmd->add_option("--steps", autolabel.cfg.max_steps, "Optimization steps");
  auto_cmd->add_option("--s-clamp", autolabel.cfg.s_clamp, "Bound on |s_k|");
  auto_cmd->add_option("--softness", autolabel.cfg.softness, "Silhouette edge softness (px)");
  auto_cmd->add_option("--ransac-iterations", autolabel.cfg.ransac_iterations, "Ground RANSAC hypotheses");
  auto_cmd->add_option("--ransac-threshold", autolabel.cfg.ransac_inlier_threshold,
                       "Ground inlier distance (m)");
  auto_cmd->add_flag("--yaw-only", autolabel.yaw_only, "Keep pitch and roll at zero");
  auto_cmd->add_flag("--stop-at-convergence", autolabel.cfg.stop_at_convergence,
                     "Stop once the loss plateaus");

  EvalOptions eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score fits against synthetic truth");
  eval_cmd->add_option("fits", eval.fits, "fits.jsonl from autolabel")->required();
  eval_cmd->add_option("truth", eval.truth, "truth.jsonl from synth")->required();
  eval_cmd->add_option("--basis", eval.basis, "Shape basis file used for the fits");

  RenderOptions render;
  CLI::App* render_cmd = app.add_subcommand("render", "Render a posed shape silhouette to PGM");
  render_cmd->add_option("--basis", render.basis, "Shape basis file (default: built-in template)");
  render_cmd->add_option("--coeffs", render.coeffs, "Comma-separated shape coefficients");
  render_cmd->add_option("--pose", render.pose, "yaw,pitch,roll,tx,ty,tz")->required();
  render_cmd->add_option("--calib", render.calib, "KITTI calibration file (P2)");
  render_cmd->add_option("--intrinsics", render.intrinsics, "fx,fy,cx,cy");
  render_cmd->add_option("--width", render.width, "Image width");
  render_cmd->add_option("--height", render.height, "Image height");
  render_cmd->add_option("--softness", render.softness, "Edge softness (px), 0 = hard");

  SweepOptions sweep;
  CLI::App* sweep_cmd = app.add_subcommand("noise-sweep", "Translation error under 2D keypoint noise");
  sweep_cmd->add_option("input", sweep.input, "Keypoint record file")->required();
  sweep_cmd->add_option("--sigmas", sweep.sigmas, "Comma-separated noise levels (px)");
  sweep_cmd->add_option("--trials", sweep.trials, "Trials per record and level");

  CLI::App* basis_cmd = app.add_subcommand("basis-export", "Write the built-in shape basis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (const auto* cfg = app.get_config_ptr(); cfg != nullptr && cfg->count() > 0) {
    common.config_path = cfg->as<std::string>();
  }

  try {
    if (*synth_cmd) return RunSynth(synth, common);
    if (*solve_cmd) return RunSolve(solve, common);
    if (*auto_cmd) return RunAutolabel(autolabel, common);
    if (*eval_cmd) return RunEval(eval, common);
    if (*render_cmd) return RunRender(render, common);
    if (*sweep_cmd) return RunNoiseSweep(sweep, common);
    if (*basis_cmd) return RunBasisExport(common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace mono3d::cli
