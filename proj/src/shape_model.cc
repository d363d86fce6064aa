#include "mono3d/shape_model.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

#include "mono3d/box_metrics.h"
#include "mono3d/error.h"
#include "mono3d/text_util.h"

namespace mono3d {

void TriangleMesh::Validate() const {
  if (vertices.empty()) throw Error(ErrorCode::kEmptyMesh, "mesh has no vertices");
  const int n = static_cast<int>(vertices.size());
  for (size_t f = 0; f < faces.size(); ++f) {
    for (int idx : faces[f]) {
      if (idx < 0 || idx >= n) {
        throw Error(ErrorCode::kIndexOutOfRange,
                    "face " + std::to_string(f) + " references vertex " +
                        std::to_string(idx) + " of " + std::to_string(n));
      }
    }
  }
}

void ShapeBasis::Validate() const {
  mean.Validate();
  if (components.size() != sigmas.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "component and sigma counts differ");
  }
  for (size_t k = 0; k < components.size(); ++k) {
    if (components[k].size() != mean.vertices.size()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "component " + std::to_string(k) + " has wrong vertex count");
    }
    if (!(sigmas[k] > 0.0)) {
      throw Error(ErrorCode::kNonPositiveDimension,
                  "component " + std::to_string(k) + " has non-positive deviation");
    }
  }
  const int n = static_cast<int>(mean.vertices.size());
  for (int idx : keypoints.semantic_indices) {
    if (idx < 0 || idx >= n) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  "keypoint index " + std::to_string(idx) + " out of range");
    }
  }
}

std::vector<Vec3> DeformVertices(const ShapeBasis& basis, const ShapeCoeff& s) {
  if (s.size() != basis.num_components()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "coefficient vector has " + std::to_string(s.size()) +
                    " entries, basis has " + std::to_string(basis.num_components()));
  }
  std::vector<Vec3> vertices = basis.mean.vertices;
  for (int k = 0; k < basis.num_components(); ++k) {
    const double scale = s(k) * basis.sigmas[static_cast<size_t>(k)];
    if (scale == 0.0) continue;
    const std::vector<Vec3>& p = basis.components[static_cast<size_t>(k)];
    for (size_t v = 0; v < vertices.size(); ++v) vertices[v] += scale * p[v];
  }
  return vertices;
}

TriangleMesh Deform(const ShapeBasis& basis, const ShapeCoeff& s) {
  TriangleMesh mesh;
  mesh.vertices = DeformVertices(basis, s);
  mesh.faces = basis.mean.faces;
  return mesh;
}

MeshExtent MeshDimensions(std::span<const Vec3> vertices) {
  if (vertices.empty()) throw Error(ErrorCode::kEmptyMesh, "mesh has no vertices");
  MeshExtent extent;
  extent.min = Vec3::Constant(std::numeric_limits<double>::infinity());
  extent.max = -extent.min;
  for (const Vec3& v : vertices) {
    extent.min = extent.min.cwiseMin(v);
    extent.max = extent.max.cwiseMax(v);
  }
  extent.center = 0.5 * (extent.min + extent.max);
  extent.dims = Dimensions::FromAxisExtents(extent.max - extent.min);
  return extent;
}

std::vector<Vec3> SampleKeypoints(const TriangleMesh& mesh, const KeypointSpec& spec) {
  const int n = static_cast<int>(mesh.vertices.size());
  std::vector<Vec3> out;
  out.reserve(spec.size());
  for (int idx : spec.semantic_indices) {
    if (idx < 0 || idx >= n) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  "keypoint index " + std::to_string(idx) + " out of range for " +
                      std::to_string(n) + " vertices");
    }
    out.push_back(mesh.vertices[static_cast<size_t>(idx)]);
  }
  const MeshExtent extent = MeshDimensions(mesh.vertices);
  for (const Vec3& offset : CanonicalCornerOffsets(0.5 * (extent.max - extent.min))) {
    out.push_back(extent.center + offset);
  }
  out.push_back(extent.center);
  return out;
}

std::vector<Vec3> NormalizeKeypoints(std::span<const Vec3> keypoints, const Dimensions& dims) {
  dims.Validate();
  const Vec3 e = dims.AxisExtents();
  std::vector<Vec3> out;
  out.reserve(keypoints.size());
  for (const Vec3& p : keypoints) out.push_back(p.cwiseQuotient(e));
  return out;
}

std::vector<Vec3> DenormalizeKeypoints(std::span<const Vec3> normalized,
                                       const Dimensions& dims) {
  dims.Validate();
  const Vec3 e = dims.AxisExtents();
  std::vector<Vec3> out;
  out.reserve(normalized.size());
  for (const Vec3& p : normalized) out.push_back(p.cwiseProduct(e));
  return out;
}

std::vector<Vec3> TransferKeypoints(std::span<const Vec3> keypoints,
                                    const Dimensions& src, const Dimensions& dst) {
  const std::vector<Vec3> normalized = NormalizeKeypoints(keypoints, src);
  return DenormalizeKeypoints(normalized, dst);
}

Dimensions DecodeDimensionResidual(const Vec3& residual, const Dimensions& class_mean) {
  class_mean.Validate();
  return {class_mean.l * std::exp(residual.x()), class_mean.w * std::exp(residual.y()),
          class_mean.h * std::exp(residual.z())};
}

Vec3 EncodeDimensionResidual(const Dimensions& dims, const Dimensions& class_mean) {
  dims.Validate();
  class_mean.Validate();
  return {std::log(dims.l / class_mean.l), std::log(dims.w / class_mean.w),
          std::log(dims.h / class_mean.h)};
}

// ---------------------------------------------------------------------------
// Basis file I/O

namespace {

constexpr std::string_view kBasisMagic = "PCA-SHAPE v1";

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  // Next non-empty, non-comment line split into fields.
  std::vector<std::string_view> Next(const char* what) {
    while (std::getline(in_, line_)) {
      ++line_no_;
      auto fields = SplitFields(line_);
      if (!fields.empty()) return fields;
    }
    throw Error(ErrorCode::kMalformedLine,
                std::string("unexpected end of basis file while reading ") + what);
  }

  [[noreturn]] void Fail(const std::string& msg) const {
    throw Error(ErrorCode::kMalformedLine,
                "basis line " + std::to_string(line_no_) + ": " + msg);
  }

  double Double(std::string_view token) const {
    double v = 0.0;
    if (!ParseDouble(token, &v) || !std::isfinite(v)) {
      Fail("expected a finite number, got '" + std::string(token) + "'");
    }
    return v;
  }

  long long Int(std::string_view token) const {
    long long v = 0;
    if (!ParseInt(token, &v)) Fail("expected an integer, got '" + std::string(token) + "'");
    return v;
  }

  Vec3 Triple(const char* what) {
    const auto f = Next(what);
    if (f.size() != 3) Fail(std::string("expected 3 values for ") + what);
    return {Double(f[0]), Double(f[1]), Double(f[2])};
  }

  const std::string& line() const { return line_; }

 private:
  std::istream& in_;
  std::string line_;
  int line_no_ = 0;
};

}  // namespace

ShapeBasis ReadShapeBasis(std::istream& in) {
  LineReader reader(in);
  std::string header;
  {
    reader.Next("header");
    header = reader.line();
    const size_t hash = header.find('#');
    if (hash != std::string::npos) header.resize(hash);
    while (!header.empty() && std::isspace(static_cast<unsigned char>(header.back()))) {
      header.pop_back();
    }
    if (header != kBasisMagic) {
      throw Error(ErrorCode::kUnsupportedFormat,
                  "basis file must start with '" + std::string(kBasisMagic) + "'");
    }
  }
  const auto counts = reader.Next("counts");
  if (counts.size() != 3) reader.Fail("expected 'V F r'");
  const long long nv = reader.Int(counts[0]);
  const long long nf = reader.Int(counts[1]);
  const long long nr = reader.Int(counts[2]);
  if (nv <= 0 || nf < 0 || nr < 0) reader.Fail("counts must be non-negative, V > 0");

  ShapeBasis basis;
  basis.mean.vertices.reserve(static_cast<size_t>(nv));
  for (long long i = 0; i < nv; ++i) basis.mean.vertices.push_back(reader.Triple("vertex"));
  basis.mean.faces.reserve(static_cast<size_t>(nf));
  for (long long i = 0; i < nf; ++i) {
    const auto f = reader.Next("face");
    if (f.size() != 3) reader.Fail("expected 3 vertex indices");
    std::array<int, 3> face{};
    for (int c = 0; c < 3; ++c) {
      const long long idx = reader.Int(f[static_cast<size_t>(c)]);
      if (idx < 0 || idx >= nv) reader.Fail("face index out of range");
      face[static_cast<size_t>(c)] = static_cast<int>(idx);
    }
    basis.mean.faces.push_back(face);
  }
  for (long long k = 0; k < nr; ++k) {
    const auto f = reader.Next("component header");
    if (f.size() != 2 || f[0] != "component") reader.Fail("expected 'component <sigma>'");
    const double sigma = reader.Double(f[1]);
    if (!(sigma > 0.0)) reader.Fail("component deviation must be positive");
    basis.sigmas.push_back(sigma);
    std::vector<Vec3> field;
    field.reserve(static_cast<size_t>(nv));
    for (long long i = 0; i < nv; ++i) field.push_back(reader.Triple("displacement"));
    basis.components.push_back(std::move(field));
  }
  const auto kp = reader.Next("keypoints");
  if (kp.size() < 2 || kp[0] != "keypoints") reader.Fail("expected 'keypoints <K> ...'");
  const long long nk = reader.Int(kp[1]);
  if (nk < 0 || static_cast<size_t>(nk) != kp.size() - 2) {
    reader.Fail("keypoint count does not match the listed indices");
  }
  for (size_t i = 2; i < kp.size(); ++i) {
    const long long idx = reader.Int(kp[i]);
    if (idx < 0 || idx >= nv) reader.Fail("keypoint index out of range");
    basis.keypoints.semantic_indices.push_back(static_cast<int>(idx));
  }
  basis.Validate();
  return basis;
}

ShapeBasis ReadShapeBasisFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open basis file " + path);
  return ReadShapeBasis(in);
}

void WriteShapeBasis(std::ostream& out, const ShapeBasis& basis) {
  basis.Validate();
  auto triple = [&out](const Vec3& v) {
    out << FormatDouble(v.x()) << ' ' << FormatDouble(v.y()) << ' ' << FormatDouble(v.z())
        << '\n';
  };
  out << kBasisMagic << '\n';
  out << basis.mean.vertices.size() << ' ' << basis.mean.faces.size() << ' '
      << basis.components.size() << '\n';
  out << "# mean vertices\n";
  for (const Vec3& v : basis.mean.vertices) triple(v);
  out << "# faces\n";
  for (const auto& f : basis.mean.faces) out << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  for (size_t k = 0; k < basis.components.size(); ++k) {
    out << "component " << FormatDouble(basis.sigmas[k]) << '\n';
    for (const Vec3& d : basis.components[k]) triple(d);
  }
  out << "keypoints " << basis.keypoints.semantic_indices.size();
  for (int idx : basis.keypoints.semantic_indices) out << ' ' << idx;
  out << '\n';
}

void WriteShapeBasisFile(const std::string& path, const ShapeBasis& basis) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write basis file " + path);
  WriteShapeBasis(out, basis);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// Procedural template

namespace {

constexpr int kStations = 41;
constexpr int kRing = 40;
constexpr int kCapRings = 5;
constexpr double kMeanLength = 4.0;
constexpr double kMeanWidth = 1.7;
constexpr double kMeanHeight = 1.5;

double SmoothStep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Superellipse-like signed power that keeps the sign of the input.
double SignedPow(double v, double p) { return std::copysign(std::pow(std::abs(v), p), v); }

// Fraction of full height reached by the roofline at normalized length
// position u in [-0.5, 0.5] (front of the car at +0.5).
double RoofProfile(double u) {
  const double cabin = SmoothStep(-0.36, -0.2, u) * (1.0 - SmoothStep(0.08, 0.24, u));
  const double hood = 0.58;
  const double deck = 0.62;
  const double base = u > 0.0 ? hood : deck;
  return base + (1.0 - base) * cabin;
}

double CabinWeight(double u) {
  return SmoothStep(-0.36, -0.2, u) * (1.0 - SmoothStep(0.08, 0.24, u));
}

int RingIndex(int station, int j) { return station * kRing + ((j % kRing) + kRing) % kRing; }

}  // namespace

ShapeBasis MakeSyntheticCarBasis() {
  ShapeBasis basis;
  TriangleMesh& mesh = basis.mean;

  const double bottom = 0.5 * kMeanHeight;  // y grows downward
  for (int i = 0; i < kStations; ++i) {
    const double u = -0.5 + static_cast<double>(i) / (kStations - 1);
    const double x = u * kMeanLength;
    const double top = bottom - kMeanHeight * RoofProfile(u);
    const double yc = 0.5 * (bottom + top);
    const double half_h = 0.5 * (bottom - top);
    // Rounded nose and tail.
    const double end_taper = 1.0 - 0.12 * std::pow(std::abs(2.0 * u), 6.0);
    const double half_w = 0.5 * kMeanWidth * end_taper;
    for (int j = 0; j < kRing; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / kRing;
      const double c = std::cos(phi);
      const double s = std::sin(phi);
      // s < 0 is the upper half (negative y); the greenhouse is narrower.
      const double greenhouse = 1.0 - 0.18 * CabinWeight(u) * std::max(0.0, -s);
      const double z = half_w * greenhouse * SignedPow(c, 0.45);
      const double y = yc + half_h * SignedPow(s, 0.45);
      mesh.vertices.emplace_back(x, y, z);
    }
  }
  // End caps: concentric rings shrinking towards the cap center.
  auto add_cap = [&](int station, bool front) {
    Vec3 center = Vec3::Zero();
    for (int j = 0; j < kRing; ++j) center += mesh.vertices[static_cast<size_t>(RingIndex(station, j))];
    center /= kRing;
    // The two caps face opposite directions.
    auto add_face = [&](int a, int b, int c) {
      if (front) {
        mesh.faces.push_back({a, c, b});
      } else {
        mesh.faces.push_back({a, b, c});
      }
    };
    std::vector<int> prev(kRing);
    for (int j = 0; j < kRing; ++j) prev[static_cast<size_t>(j)] = RingIndex(station, j);
    for (int r = 1; r < kCapRings; ++r) {
      const double scale = 1.0 - static_cast<double>(r) / kCapRings;
      std::vector<int> cur(kRing);
      for (int j = 0; j < kRing; ++j) {
        const Vec3& outer = mesh.vertices[static_cast<size_t>(RingIndex(station, j))];
        cur[static_cast<size_t>(j)] = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(center + scale * (outer - center));
      }
      for (int j = 0; j < kRing; ++j) {
        const int a = prev[static_cast<size_t>(j)];
        const int b = prev[static_cast<size_t>((j + 1) % kRing)];
        const int c = cur[static_cast<size_t>((j + 1) % kRing)];
        const int d = cur[static_cast<size_t>(j)];
        add_face(a, b, c);
        add_face(a, c, d);
      }
      prev = cur;
    }
    const int mid = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(center);
    for (int j = 0; j < kRing; ++j) {
      add_face(mid, prev[static_cast<size_t>(j)], prev[static_cast<size_t>((j + 1) % kRing)]);
    }
  };

  for (int i = 0; i + 1 < kStations; ++i) {
    for (int j = 0; j < kRing; ++j) {
      const int a = RingIndex(i, j);
      const int b = RingIndex(i + 1, j);
      const int c = RingIndex(i + 1, j + 1);
      const int d = RingIndex(i, j + 1);
      mesh.faces.push_back({a, b, c});
      mesh.faces.push_back({a, c, d});
    }
  }
  add_cap(0, false);
  add_cap(kStations - 1, true);

  // Orient faces outward (positive signed volume).
  double volume6 = 0.0;
  for (const auto& f : mesh.faces) {
    volume6 += mesh.vertices[static_cast<size_t>(f[0])].dot(
        mesh.vertices[static_cast<size_t>(f[1])].cross(mesh.vertices[static_cast<size_t>(f[2])]));
  }
  if (volume6 < 0.0) {
    for (auto& f : mesh.faces) std::swap(f[1], f[2]);
  }

  // Recenter so the mean mesh's bounding box is centered at the origin.
  const Vec3 center = MeshDimensions(mesh.vertices).center;
  for (Vec3& v : mesh.vertices) v -= center;

  // Raw displacement fields: length, width and height scaling, and a rear
  // deck raise (notchback towards hatchback).
  const size_t nv = mesh.vertices.size();
  std::vector<std::vector<Vec3>> raw(4, std::vector<Vec3>(nv, Vec3::Zero()));
  for (size_t v = 0; v < nv; ++v) {
    const Vec3& p = mesh.vertices[v];
    const double u = p.x() / kMeanLength;
    raw[0][v] = Vec3(0.10 * p.x(), 0.0, 0.0);
    raw[1][v] = Vec3(0.0, 0.0, 0.08 * p.z());
    raw[2][v] = Vec3(0.0, 0.08 * p.y(), 0.0);
    // Vertical stretch of the rear section about the ground line.
    const double rear = 1.0 - SmoothStep(-0.3, -0.05, u);
    raw[3][v] = Vec3(0.0, -0.3 * rear * (0.5 * kMeanHeight - p.y()), 0.0);
  }
  // Gram-Schmidt: unit, mutually orthogonal directions; sigma carries scale.
  for (size_t k = 0; k < raw.size(); ++k) {
    for (size_t q = 0; q < k; ++q) {
      double dot = 0.0;
      for (size_t v = 0; v < nv; ++v) dot += raw[k][v].dot(basis.components[q][v]);
      for (size_t v = 0; v < nv; ++v) raw[k][v] -= dot * basis.components[q][v];
    }
    double norm2 = 0.0;
    for (const Vec3& d : raw[k]) norm2 += d.squaredNorm();
    const double norm = std::sqrt(norm2);
    for (Vec3& d : raw[k]) d /= norm;
    basis.components.push_back(raw[k]);
    basis.sigmas.push_back(norm);
  }

  // 16 semantic keypoints: 4 length stations (bumpers and wheel arches) x
  // 4 ring positions (lower and belt line, both sides).
  const int stations[] = {(kStations - 1) / 24, 5 * (kStations - 1) / 24,
                          19 * (kStations - 1) / 24, 23 * (kStations - 1) / 24};
  const int ring_positions[] = {kRing / 8, 3 * kRing / 8, 5 * kRing / 8 + 1, 7 * kRing / 8 - 1};
  for (int st : stations) {
    for (int j : ring_positions) basis.keypoints.semantic_indices.push_back(RingIndex(st, j));
  }
  basis.Validate();
  return basis;
}

}  // namespace mono3d
