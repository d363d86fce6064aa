#include "mono3d/silhouette.h"

#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "mono3d/error.h"
#include "mono3d/shape_model.h"

namespace mono3d {
namespace {

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kIoError;
}

// With f = 1, c = 0 and the identity pose, a vertex (x, y, 1) lands on
// pixel coordinates (x, y).
const CameraIntrinsics kUnitCamera{1.0, 1.0, 0.0, 0.0};

TriangleMesh PlanarTriangle(const Vec2& a, const Vec2& b, const Vec2& c) {
  TriangleMesh mesh;
  mesh.vertices = {Vec3(a.x(), a.y(), 1.0), Vec3(b.x(), b.y(), 1.0), Vec3(c.x(), c.y(), 1.0)};
  mesh.faces = {{0, 1, 2}};
  return mesh;
}

TriangleMesh Cube(double half) {
  TriangleMesh mesh;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.emplace_back(i & 1 ? half : -half, i & 2 ? half : -half, i & 4 ? half : -half);
  }
  mesh.faces = {{0, 1, 3}, {0, 3, 2}, {4, 6, 7}, {4, 7, 5}, {0, 4, 5}, {0, 5, 1},
                {2, 3, 7}, {2, 7, 6}, {0, 2, 6}, {0, 6, 4}, {1, 5, 7}, {1, 7, 3}};
  return mesh;
}

// Barycentric containment of a pixel center.
bool InsideTriangle(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  Eigen::Matrix2d m;
  m.col(0) = b - a;
  m.col(1) = c - a;
  const Vec2 l = m.inverse() * (p - a);
  return l.x() >= 0.0 && l.y() >= 0.0 && l.x() + l.y() <= 1.0;
}

MaskImage RandomMask(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MaskImage m(w, h);
  for (double& v : m.values()) v = u(rng);
  return m;
}

TEST(RenderSilhouette, SingleCoveredPixel) {
  const TriangleMesh tri = PlanarTriangle(Vec2(0.6, 0.6), Vec2(1.6, 0.6), Vec2(0.6, 1.6));
  const MaskImage mask = RenderSilhouette(tri, Pose{}, kUnitCamera, 4, 4, 0.0);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) EXPECT_EQ(mask.at(x, y), (x == 1 && y == 1) ? 1.0 : 0.0);
  }
}

TEST(RenderSilhouette, HardMaskMatchesPointInTriangleOracle) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> coord(-3.0, 23.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec2 a(coord(rng), coord(rng)), b(coord(rng), coord(rng)), c(coord(rng), coord(rng));
    if (std::abs((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x()) < 1e-3) continue;
    const MaskImage mask = RenderSilhouette(PlanarTriangle(a, b, c), Pose{}, kUnitCamera, 20, 20, 0.0);
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 20; ++x) {
        EXPECT_EQ(mask.at(x, y) == 1.0, InsideTriangle(Vec2(x, y), a, b, c))
            << "trial " << trial << " pixel " << x << "," << y;
      }
    }
  }
}

TEST(RenderSilhouette, BehindCamera) {
  Pose pose;
  pose.t = Vec3(0, 0, -10);
  EXPECT_EQ(CodeOf([&] { RenderSilhouette(Cube(1.0), pose, kUnitCamera, 8, 8, 0.0); }),
            ErrorCode::kAllVerticesClipped);
  EXPECT_EQ(CodeOf([&] { RenderSilhouette(TriangleMesh{}, pose, kUnitCamera, 8, 8, 0.0); }),
            ErrorCode::kEmptyMesh);
}

TEST(RenderSilhouette, OutOfFrameIsEmpty) {
  const CameraIntrinsics k{100, 100, 32, 32};
  Pose pose;
  pose.t = Vec3(50, 0, 10);
  for (double softness : {0.0, 1.5}) {
    const MaskImage mask = RenderSilhouette(Cube(1.0), pose, k, 64, 64, softness);
    for (double v : mask.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(RenderSilhouette, PartiallyClippedMeshDropsFaces) {
  // Two triangles, one entirely in front of the camera, one with a vertex
  // behind it.
  TriangleMesh mesh = PlanarTriangle(Vec2(0.6, 0.6), Vec2(1.6, 0.6), Vec2(0.6, 1.6));
  mesh.vertices.push_back(Vec3(3, 3, -1));
  mesh.faces.push_back({0, 1, 3});
  const MaskImage mask = RenderSilhouette(mesh, Pose{}, kUnitCamera, 4, 4, 0.0);
  EXPECT_EQ(mask.CountOccupied(), 1);
}

TEST(RenderSilhouette, DilationIsMonotone) {
  const CameraIntrinsics k{120, 120, 40, 40};
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> angle(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    Pose pose;
    pose.yaw = angle(rng);
    pose.pitch = 0.3 * angle(rng);
    pose.roll = 0.3 * angle(rng);
    pose.t = Vec3(0.1 * angle(rng), 0.1 * angle(rng), 6.0);
    const MaskImage small = RenderSilhouette(Cube(1.0), pose, k, 80, 80, 0.0);
    const MaskImage large = RenderSilhouette(Cube(1.1), pose, k, 80, 80, 0.0);
    for (size_t i = 0; i < small.values().size(); ++i) {
      if (small.values()[i] == 1.0) EXPECT_EQ(large.values()[i], 1.0);
    }
    EXPECT_GT(large.CountOccupied(), small.CountOccupied());
  }
}

TEST(RenderSilhouette, SoftMaskConvergesToHard) {
  const ShapeBasis basis = MakeSyntheticCarBasis();
  const CameraIntrinsics k{230, 230, 128, 128};
  Pose pose;
  pose.yaw = 0.6;
  pose.t = Vec3(0.2, 0.8, 10.0);
  const SilhouetteRenderer renderer(basis.mean.faces);
  const MaskImage hard = renderer.Render(basis.mean.vertices, pose, k, 256, 256, 0.0);
  double previous_sum = 1e300;
  double previous_max = 1e300;
  for (double softness : {2.0, 1.0, 0.5, 0.25}) {
    const MaskImage soft = renderer.Render(basis.mean.vertices, pose, k, 256, 256, softness);
    const double sum = MaskL1(soft, hard);
    double max = 0.0;
    for (size_t i = 0; i < soft.values().size(); ++i) {
      max = std::max(max, std::abs(soft.values()[i] - hard.values()[i]));
    }
    EXPECT_LT(sum, previous_sum);
    EXPECT_LE(max, previous_max);
    previous_sum = sum;
    previous_max = max;
  }
}

TEST(RenderSilhouette, SoftMaskEqualsHardAwayFromContour) {
  const ShapeBasis basis = MakeSyntheticCarBasis();
  const CameraIntrinsics k{230, 230, 128, 128};
  Pose pose;
  pose.yaw = -0.9;
  pose.t = Vec3(-0.3, 0.8, 11.0);
  const SilhouetteRenderer renderer(basis.mean.faces);
  const double softness = 1.5;
  const MaskImage hard = renderer.Render(basis.mean.vertices, pose, k, 256, 256, 0.0);
  const MaskImage soft = renderer.Render(basis.mean.vertices, pose, k, 256, 256, softness);
  const int reach = static_cast<int>(std::ceil(3 * softness)) + 1;
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 256; ++x) {
      const double s = soft.at(x, y);
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
      if (s == hard.at(x, y)) continue;
      // Any blended pixel needs a hard-mask transition nearby.
      bool transition = false;
      for (int dy = -reach; dy <= reach && !transition; ++dy) {
        for (int dx = -reach; dx <= reach && !transition; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= 256 || yy >= 256) continue;
          transition = hard.at(xx, yy) != hard.at(x, y);
        }
      }
      EXPECT_TRUE(transition) << x << "," << y;
      // Outside pixels stay below one half, inside pixels at or above it.
      EXPECT_EQ(s >= 0.5, hard.at(x, y) == 1.0);
    }
  }
}

TEST(RenderSilhouette, InvalidArguments) {
  const TriangleMesh tri = PlanarTriangle(Vec2(0.6, 0.6), Vec2(1.6, 0.6), Vec2(0.6, 1.6));
  EXPECT_EQ(CodeOf([&] { RenderSilhouette(tri, Pose{}, kUnitCamera, 0, 4, 0.0); }),
            ErrorCode::kNonPositiveDimension);
  EXPECT_EQ(CodeOf([&] { RenderSilhouette(tri, Pose{}, kUnitCamera, 4, 4, -1.0); }),
            ErrorCode::kNonFiniteInput);
  TriangleMesh bad = tri;
  bad.faces.push_back({0, 1, 7});
  EXPECT_EQ(CodeOf([&] { RenderSilhouette(bad, Pose{}, kUnitCamera, 4, 4, 0.0); }),
            ErrorCode::kIndexOutOfRange);
}

TEST(MaskL1, Examples) {
  const MaskImage ones(4, 4, 1.0);
  const MaskImage zeros(4, 4, 0.0);
  EXPECT_EQ(MaskL1(ones, ones), 0.0);
  EXPECT_EQ(MaskL1(ones, zeros), 16.0);
  EXPECT_EQ(CodeOf([&] { MaskL1(ones, MaskImage(4, 5)); }), ErrorCode::kSizeMismatch);
}

TEST(MaskL1, MatchesElementwiseOracleAndIsAMetric) {
  std::mt19937_64 rng(63);
  for (int trial = 0; trial < 50; ++trial) {
    const MaskImage a = RandomMask(rng, 13, 7);
    const MaskImage b = RandomMask(rng, 13, 7);
    const MaskImage c = RandomMask(rng, 13, 7);
    double oracle = 0.0;
    for (int y = 0; y < 7; ++y) {
      for (int x = 0; x < 13; ++x) oracle += std::abs(a.at(x, y) - b.at(x, y));
    }
    EXPECT_NEAR(MaskL1(a, b), oracle, 1e-12);
    EXPECT_EQ(MaskL1(a, b), MaskL1(b, a));
    EXPECT_LE(MaskL1(a, c), MaskL1(a, b) + MaskL1(b, c) + 1e-12);
    EXPECT_EQ(MaskL1(a, a), 0.0);
  }
}

TEST(MaskIou, Examples) {
  MaskImage a(10, 10), b(10, 10), c(10, 10);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      a.at(x, y) = 1.0;
      b.at(x + 2, y) = 1.0;  // half-overlapping rectangle of equal area
      c.at(x + 6, y + 6) = 1.0;
    }
  }
  EXPECT_EQ(MaskIou(a, a), 1.0);
  EXPECT_EQ(MaskIou(a, c), 0.0);
  EXPECT_DOUBLE_EQ(MaskIou(a, b), 1.0 / 3.0);
  EXPECT_EQ(MaskIou(MaskImage(3, 3), MaskImage(3, 3)), 1.0);
  EXPECT_EQ(CodeOf([&] { MaskIou(a, MaskImage(9, 10)); }), ErrorCode::kSizeMismatch);
}

TEST(MaskImage, CountOccupiedThreshold) {
  MaskImage m(3, 1);
  m.at(0, 0) = 0.49;
  m.at(1, 0) = 0.5;
  m.at(2, 0) = 1.0;
  EXPECT_EQ(m.CountOccupied(), 2);
}

}  // namespace
}  // namespace mono3d
