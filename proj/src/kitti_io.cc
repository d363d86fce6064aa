#include "mono3d/kitti_io.h"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>

#include "mono3d/error.h"
#include "mono3d/text_util.h"

namespace mono3d {
namespace {

static_assert(sizeof(float) == 4, "velodyne scans store 32-bit floats");

double LabelNumber(std::string_view token, int field) {
  double v = 0.0;
  if (!ParseDouble(token, &v)) {
    throw Error(ErrorCode::kMalformedLine, "label field " + std::to_string(field) +
                                               " is not numeric: '" + std::string(token) + "'");
  }
  return v;
}

std::vector<unsigned char> ReadAllBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteAllBytes(const std::string& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

std::uint32_t LoadLe32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void StoreLe32(std::uint32_t v, unsigned char* p) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

template <int Rows, int Cols>
Eigen::Matrix<double, Rows, Cols> ParseMatrix(const std::vector<std::string_view>& fields,
                                              const std::string& key) {
  if (fields.size() != static_cast<size_t>(Rows * Cols)) {
    throw Error(ErrorCode::kMalformedLine,
                "calib key " + key + " needs " + std::to_string(Rows * Cols) + " values");
  }
  Eigen::Matrix<double, Rows, Cols> m;
  for (int r = 0; r < Rows; ++r) {
    for (int c = 0; c < Cols; ++c) {
      double v = 0.0;
      if (!ParseDouble(fields[static_cast<size_t>(r * Cols + c)], &v)) {
        throw Error(ErrorCode::kMalformedLine, "calib key " + key + " has a non-numeric value");
      }
      m(r, c) = v;
    }
  }
  return m;
}

template <typename Derived>
void WriteMatrix(std::ostream& out, const std::string& key,
                 const Eigen::MatrixBase<Derived>& m) {
  out << key << ':';
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) out << ' ' << FormatDouble(m(r, c));
  }
  out << '\n';
}

// Next whitespace-delimited PGM header token, skipping '#' comments.
std::string PgmToken(std::span<const unsigned char> bytes, size_t* pos) {
  while (*pos < bytes.size()) {
    const unsigned char c = bytes[*pos];
    if (c == '#') {
      while (*pos < bytes.size() && bytes[*pos] != '\n') ++*pos;
    } else if (std::isspace(c)) {
      ++*pos;
    } else {
      break;
    }
  }
  std::string token;
  while (*pos < bytes.size() && !std::isspace(bytes[*pos])) {
    token.push_back(static_cast<char>(bytes[*pos]));
    ++*pos;
  }
  return token;
}

}  // namespace

KittiLabel ParseLabelLine(std::string_view line) {
  const auto f = SplitFields(line);
  if (f.size() != 15 && f.size() != 16) {
    throw Error(ErrorCode::kMalformedLine,
                "label line has " + std::to_string(f.size()) + " fields, expected 15 or 16");
  }
  KittiLabel label;
  label.type = std::string(f[0]);
  label.truncation = LabelNumber(f[1], 1);
  const double occ = LabelNumber(f[2], 2);
  if (occ != std::floor(occ)) {
    throw Error(ErrorCode::kMalformedLine, "occlusion must be an integer");
  }
  label.occlusion = static_cast<int>(occ);
  label.alpha = LabelNumber(f[3], 3);
  for (int i = 0; i < 4; ++i) label.bbox[static_cast<size_t>(i)] = LabelNumber(f[4 + i], 4 + i);
  label.h = LabelNumber(f[8], 8);
  label.w = LabelNumber(f[9], 9);
  label.l = LabelNumber(f[10], 10);
  label.location = Vec3(LabelNumber(f[11], 11), LabelNumber(f[12], 12), LabelNumber(f[13], 13));
  label.rotation_y = LabelNumber(f[14], 14);
  if (f.size() == 16) label.score = LabelNumber(f[15], 15);
  return label;
}

std::string FormatLabelLine(const KittiLabel& label) {
  std::ostringstream out;
  out << label.type << ' ' << FormatDouble(label.truncation) << ' ' << label.occlusion << ' '
      << FormatDouble(label.alpha);
  for (double b : label.bbox) out << ' ' << FormatDouble(b);
  out << ' ' << FormatDouble(label.h) << ' ' << FormatDouble(label.w) << ' '
      << FormatDouble(label.l) << ' ' << FormatDouble(label.location.x()) << ' '
      << FormatDouble(label.location.y()) << ' ' << FormatDouble(label.location.z()) << ' '
      << FormatDouble(label.rotation_y);
  if (label.score) out << ' ' << FormatDouble(*label.score);
  return out.str();
}

std::vector<KittiLabel> ReadLabelFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open label file " + path);
  std::vector<KittiLabel> labels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (SplitFields(line).empty()) continue;
    try {
      labels.push_back(ParseLabelLine(line));
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return labels;
}

void WriteLabelFile(const std::string& path, std::span<const KittiLabel> labels) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write label file " + path);
  for (const KittiLabel& label : labels) out << FormatLabelLine(label) << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

Box3D LabelToBox(const KittiLabel& label) {
  Box3D box;
  box.dims = {label.l, label.w, label.h};
  box.center = label.location - Vec3(0.0, 0.5 * label.h, 0.0);
  box.yaw = label.rotation_y;
  return box;
}

KittiLabel BoxToLabel(const Box3D& box, std::string type) {
  KittiLabel label;
  label.type = std::move(type);
  label.h = box.dims.h;
  label.w = box.dims.w;
  label.l = box.dims.l;
  label.location = box.center + Vec3(0.0, 0.5 * box.dims.h, 0.0);
  label.rotation_y = box.yaw;
  return label;
}

CalibSet ParseCalib(std::istream& in) {
  std::map<std::string, std::vector<std::string>> entries;
  std::string line;
  while (std::getline(in, line)) {
    const size_t colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = line.substr(0, colon);
    while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
    std::vector<std::string> values;
    for (std::string_view tok : SplitFields(std::string_view(line).substr(colon + 1))) {
      values.emplace_back(tok);
    }
    entries[key] = std::move(values);
  }
  auto fields = [&entries](const std::string& key) {
    const auto it = entries.find(key);
    if (it == entries.end()) throw Error(ErrorCode::kMissingKey, "calib has no " + key);
    return std::vector<std::string_view>(it->second.begin(), it->second.end());
  };
  CalibSet calib;
  calib.p2 = ParseMatrix<3, 4>(fields("P2"), "P2");
  calib.r0_rect = ParseMatrix<3, 3>(fields("R0_rect"), "R0_rect");
  calib.tr_velo_to_cam = ParseMatrix<3, 4>(fields("Tr_velo_to_cam"), "Tr_velo_to_cam");
  return calib;
}

CalibSet ReadCalibFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open calib file " + path);
  return ParseCalib(in);
}

void WriteCalib(std::ostream& out, const CalibSet& calib) {
  WriteMatrix(out, "P2", calib.p2);
  WriteMatrix(out, "R0_rect", calib.r0_rect);
  WriteMatrix(out, "Tr_velo_to_cam", calib.tr_velo_to_cam);
}

void WriteCalibFile(const std::string& path, const CalibSet& calib) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write calib file " + path);
  WriteCalib(out, calib);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

CameraIntrinsics IntrinsicsFromP2(const CalibSet& calib) {
  CameraIntrinsics k{calib.p2(0, 0), calib.p2(1, 1), calib.p2(0, 2), calib.p2(1, 2)};
  k.Validate();
  return k;
}

PointCloud ParseVelodyne(std::span<const unsigned char> bytes) {
  if (bytes.size() % 16 != 0) {
    throw Error(ErrorCode::kTruncatedFile, "velodyne scan has " + std::to_string(bytes.size()) +
                                               " bytes, not a multiple of 16");
  }
  PointCloud cloud(bytes.size() / 16);
  for (size_t i = 0; i < cloud.size(); ++i) {
    const unsigned char* p = bytes.data() + 16 * i;
    cloud[i].x = std::bit_cast<float>(LoadLe32(p));
    cloud[i].y = std::bit_cast<float>(LoadLe32(p + 4));
    cloud[i].z = std::bit_cast<float>(LoadLe32(p + 8));
    cloud[i].reflectance = std::bit_cast<float>(LoadLe32(p + 12));
  }
  return cloud;
}

PointCloud ReadVelodyne(const std::string& path) { return ParseVelodyne(ReadAllBytes(path)); }

std::vector<unsigned char> SerializeVelodyne(const PointCloud& cloud) {
  std::vector<unsigned char> bytes(cloud.size() * 16);
  for (size_t i = 0; i < cloud.size(); ++i) {
    unsigned char* p = bytes.data() + 16 * i;
    StoreLe32(std::bit_cast<std::uint32_t>(cloud[i].x), p);
    StoreLe32(std::bit_cast<std::uint32_t>(cloud[i].y), p + 4);
    StoreLe32(std::bit_cast<std::uint32_t>(cloud[i].z), p + 8);
    StoreLe32(std::bit_cast<std::uint32_t>(cloud[i].reflectance), p + 12);
  }
  return bytes;
}

void WriteVelodyne(const std::string& path, const PointCloud& cloud) {
  WriteAllBytes(path, SerializeVelodyne(cloud));
}

std::vector<Vec3> VeloToCamera(const PointCloud& cloud, const CalibSet& calib) {
  Eigen::Matrix4d velo_to_cam = Eigen::Matrix4d::Identity();
  velo_to_cam.topRows<3>() = calib.tr_velo_to_cam;
  Eigen::Matrix4d rect = Eigen::Matrix4d::Identity();
  rect.topLeftCorner<3, 3>() = calib.r0_rect;
  const Eigen::Matrix4d m = rect * velo_to_cam;
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const LidarPoint& p : cloud) {
    const Eigen::Vector4d h(p.x, p.y, p.z, 1.0);
    out.push_back((m * h).head<3>());
  }
  return out;
}

MaskImage ParseMask(std::span<const unsigned char> bytes) {
  size_t pos = 0;
  if (PgmToken(bytes, &pos) != "P5") {
    throw Error(ErrorCode::kUnsupportedFormat, "mask is not a binary PGM (P5)");
  }
  long long w = 0, h = 0, maxval = 0;
  if (!ParseInt(PgmToken(bytes, &pos), &w) || !ParseInt(PgmToken(bytes, &pos), &h) ||
      !ParseInt(PgmToken(bytes, &pos), &maxval)) {
    throw Error(ErrorCode::kUnsupportedFormat, "malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw Error(ErrorCode::kUnsupportedFormat, "only 8-bit PGM masks with positive size are supported");
  }
  ++pos;  // single whitespace after maxval
  const size_t n = static_cast<size_t>(w) * static_cast<size_t>(h);
  if (pos > bytes.size() || bytes.size() - pos < n) {
    throw Error(ErrorCode::kTruncatedFile, "PGM pixel data is truncated");
  }
  MaskImage mask(static_cast<int>(w), static_cast<int>(h));
  std::span<double> values = mask.values();
  for (size_t i = 0; i < n; ++i) values[i] = bytes[pos + i] >= 128 ? 1.0 : 0.0;
  return mask;
}

MaskImage ReadMask(const std::string& path) { return ParseMask(ReadAllBytes(path)); }

std::vector<unsigned char> SerializeMask(const MaskImage& mask) {
  const std::string header = "P5\n" + std::to_string(mask.width()) + " " +
                             std::to_string(mask.height()) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.reserve(header.size() + mask.values().size());
  for (double v : mask.values()) {
    bytes.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return bytes;
}

void WriteMask(const std::string& path, const MaskImage& mask) {
  WriteAllBytes(path, SerializeMask(mask));
}

}  // namespace mono3d
