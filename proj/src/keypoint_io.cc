#include "mono3d/keypoint_io.h"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "mono3d/error.h"
#include "mono3d/text_util.h"

namespace mono3d {
namespace {

class RecordParser {
 public:
  RecordParser(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool NextFields(std::vector<std::string_view>* fields) {
    while (std::getline(in_, line_)) {
      ++line_no_;
      *fields = SplitFields(line_);
      if (!fields->empty()) return true;
    }
    return false;
  }

  std::vector<std::string_view> Require(const char* what) {
    std::vector<std::string_view> fields;
    if (!NextFields(&fields)) Fail(std::string("unexpected end of file, expected ") + what);
    return fields;
  }

  [[noreturn]] void Fail(const std::string& msg) const {
    throw Error(ErrorCode::kMalformedLine,
                source_ + ":" + std::to_string(line_no_) + ": " + msg);
  }

  double Number(std::string_view token) const {
    double v = 0.0;
    if (!ParseDouble(token, &v) || !std::isfinite(v)) {
      Fail("expected a finite number, got '" + std::string(token) + "'");
    }
    return v;
  }

  void ExpectKey(const std::vector<std::string_view>& f, std::string_view key,
                 size_t values) const {
    if (f[0] != key) Fail("expected '" + std::string(key) + "', got '" + std::string(f[0]) + "'");
    if (f.size() != values + 1) {
      Fail("'" + std::string(key) + "' takes " + std::to_string(values) + " value(s)");
    }
  }

 private:
  std::istream& in_;
  std::string source_;
  std::string line_;
  int line_no_ = 0;
};

}  // namespace

KeypointSet KeypointRecord::MetricKeypoints() const {
  if (!dims) return keypoints;
  return DenormalizeKeypoints3d(keypoints, *dims);
}

std::vector<KeypointRecord> ReadKeypointRecords(std::istream& in, const std::string& source) {
  RecordParser parser(in, source);
  std::vector<KeypointRecord> records;
  std::vector<std::string_view> f;
  while (parser.NextFields(&f)) {
    KeypointRecord rec;
    parser.ExpectKey(f, "object", 1);
    rec.id = std::string(f[1]);

    f = parser.Require("intrinsics");
    parser.ExpectKey(f, "intrinsics", 4);
    rec.intrinsics = {parser.Number(f[1]), parser.Number(f[2]), parser.Number(f[3]),
                      parser.Number(f[4])};
    if (!(rec.intrinsics.fx > 0.0) || !(rec.intrinsics.fy > 0.0)) {
      parser.Fail("focal lengths must be positive");
    }

    f = parser.Require("yaw");
    parser.ExpectKey(f, "yaw", 1);
    rec.yaw = parser.Number(f[1]);

    f = parser.Require("keypoints");
    if (f[0] == "dims") {
      parser.ExpectKey(f, "dims", 3);
      const Dimensions d{parser.Number(f[1]), parser.Number(f[2]), parser.Number(f[3])};
      if (!(d.l > 0.0 && d.w > 0.0 && d.h > 0.0)) parser.Fail("dims must be positive");
      rec.dims = d;
      f = parser.Require("keypoints");
    }
    parser.ExpectKey(f, "keypoints", 1);
    long long n = 0;
    if (!ParseInt(f[1], &n) || n < 0) parser.Fail("keypoint count must be a non-negative integer");
    rec.keypoints.reserve(static_cast<size_t>(n));
    for (long long i = 0; i < n; ++i) {
      f = parser.Require("keypoint line");
      if (f.size() != 7) parser.Fail("keypoint line needs 7 fields: u v x y z cu cv");
      KeypointPair kp;
      kp.p2d = Vec2(parser.Number(f[0]), parser.Number(f[1]));
      kp.p3d = Vec3(parser.Number(f[2]), parser.Number(f[3]), parser.Number(f[4]));
      kp.conf_u = parser.Number(f[5]);
      kp.conf_v = parser.Number(f[6]);
      if (kp.conf_u < 0.0 || kp.conf_u > 1.0 || kp.conf_v < 0.0 || kp.conf_v > 1.0) {
        parser.Fail("confidences must lie in [0, 1]");
      }
      rec.keypoints.push_back(kp);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<KeypointRecord> ReadKeypointFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open keypoint file " + path);
  return ReadKeypointRecords(in, path);
}

void WriteKeypointRecords(std::ostream& out, std::span<const KeypointRecord> records) {
  for (const KeypointRecord& rec : records) {
    out << "object " << rec.id << '\n';
    out << "intrinsics " << FormatDouble(rec.intrinsics.fx) << ' '
        << FormatDouble(rec.intrinsics.fy) << ' ' << FormatDouble(rec.intrinsics.cx) << ' '
        << FormatDouble(rec.intrinsics.cy) << '\n';
    out << "yaw " << FormatDouble(rec.yaw) << '\n';
    if (rec.dims) {
      out << "dims " << FormatDouble(rec.dims->l) << ' ' << FormatDouble(rec.dims->w) << ' '
          << FormatDouble(rec.dims->h) << '\n';
    }
    out << "keypoints " << rec.keypoints.size() << '\n';
    for (const KeypointPair& kp : rec.keypoints) {
      out << FormatDouble(kp.p2d.x()) << ' ' << FormatDouble(kp.p2d.y()) << ' '
          << FormatDouble(kp.p3d.x()) << ' ' << FormatDouble(kp.p3d.y()) << ' '
          << FormatDouble(kp.p3d.z()) << ' ' << FormatDouble(kp.conf_u) << ' '
          << FormatDouble(kp.conf_v) << '\n';
    }
  }
}

void WriteKeypointFile(const std::string& path, std::span<const KeypointRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write keypoint file " + path);
  WriteKeypointRecords(out, records);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

}  // namespace mono3d
