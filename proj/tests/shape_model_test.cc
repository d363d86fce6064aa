#include "mono3d/shape_model.h"

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "mono3d/error.h"

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

TriangleMesh Cube(const Vec3& scale = Vec3::Ones()) {
  TriangleMesh mesh;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.emplace_back((i & 1 ? 0.5 : -0.5) * scale.x(), (i & 2 ? 0.5 : -0.5) * scale.y(),
                               (i & 4 ? 0.5 : -0.5) * scale.z());
  }
  mesh.faces = {{0, 1, 3}, {0, 3, 2}, {4, 6, 7}, {4, 7, 5}, {0, 4, 5}, {0, 5, 1},
                {2, 3, 7}, {2, 7, 6}, {0, 2, 6}, {0, 6, 4}, {1, 5, 7}, {1, 7, 3}};
  return mesh;
}

// Small two-component basis over a cube.
ShapeBasis CubeBasis() {
  ShapeBasis basis;
  basis.mean = Cube();
  std::mt19937_64 rng(51);
  std::normal_distribution<double> n(0.0, 0.1);
  for (int k = 0; k < 2; ++k) {
    std::vector<Vec3> field;
    for (size_t v = 0; v < 8; ++v) field.emplace_back(n(rng), n(rng), n(rng));
    basis.components.push_back(field);
    basis.sigmas.push_back(0.5 + k);
  }
  basis.keypoints.semantic_indices = {7, 0};
  return basis;
}

TEST(Deform, ZeroCoefficientsGiveMean) {
  const ShapeBasis basis = MakeSyntheticCarBasis();
  const TriangleMesh mesh = Deform(basis, ShapeCoeff::Zero(basis.num_components()));
  EXPECT_EQ(mesh.vertices, basis.mean.vertices);
  EXPECT_EQ(mesh.faces, basis.mean.faces);
}

TEST(Deform, UnitCoefficientAddsScaledComponent) {
  const ShapeBasis basis = MakeSyntheticCarBasis();
  for (int k = 0; k < basis.num_components(); ++k) {
    ShapeCoeff s = ShapeCoeff::Zero(basis.num_components());
    s(k) = 1.0;
    const std::vector<Vec3> v = DeformVertices(basis, s);
    for (size_t i = 0; i < v.size(); ++i) {
      const Vec3 expected = basis.mean.vertices[i] +
                            basis.sigmas[static_cast<size_t>(k)] *
                                basis.components[static_cast<size_t>(k)][i];
      EXPECT_LT((v[i] - expected).cwiseAbs().maxCoeff(), 1e-15);
    }
  }
}

TEST(Deform, Linearity) {
  const ShapeBasis basis = MakeSyntheticCarBasis();
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const int r = basis.num_components();
  for (int trial = 0; trial < 20; ++trial) {
    ShapeCoeff a(r), b(r);
    for (int k = 0; k < r; ++k) {
      a(k) = u(rng);
      b(k) = u(rng);
    }
    const auto va = DeformVertices(basis, a);
    const auto vb = DeformVertices(basis, b);
    const auto vab = DeformVertices(basis, a + b);
    for (size_t i = 0; i < va.size(); ++i) {
      EXPECT_LT((va[i] + vb[i] - basis.mean.vertices[i] - vab[i]).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Deform, JacobianMatchesFiniteDifferences) {
  const ShapeBasis basis = CubeBasis();
  const ShapeCoeff s(Eigen::Vector2d(0.3, -0.7));
  const double h = 1e-4;
  for (int k = 0; k < 2; ++k) {
    ShapeCoeff sp = s, sm = s;
    sp(k) += h;
    sm(k) -= h;
    const auto vp = DeformVertices(basis, sp);
    const auto vm = DeformVertices(basis, sm);
    for (size_t i = 0; i < vp.size(); ++i) {
      const Vec3 fd = (vp[i] - vm[i]) / (2 * h);
      const Vec3 analytic =
          basis.sigmas[static_cast<size_t>(k)] * basis.components[static_cast<size_t>(k)][i];
      EXPECT_LE((fd - analytic).norm(), 1e-8 * analytic.norm());
    }
  }
}

TEST(Deform, WrongCoefficientCount) {
  const ShapeBasis basis = CubeBasis();
  EXPECT_EQ(CodeOf([&] { Deform(basis, ShapeCoeff::Zero(3)); }), ErrorCode::kDimensionMismatch);
}

TEST(SampleKeypoints, CubeCornersAndCenter) {
  const TriangleMesh cube = Cube();
  KeypointSpec spec;
  spec.semantic_indices = {3};
  const auto kps = SampleKeypoints(cube, spec);
  ASSERT_EQ(kps.size(), 10u);
  EXPECT_EQ(kps[0], cube.vertices[3]);
  for (size_t i = 1; i <= 8; ++i) {
    EXPECT_EQ(kps[i].cwiseAbs(), Vec3::Constant(0.5));
    bool is_vertex = false;
    for (const Vec3& v : cube.vertices) is_vertex |= (v == kps[i]);
    EXPECT_TRUE(is_vertex);
  }
  // Bottom face first (y = +h/2 with y pointing down), then top.
  for (size_t i = 1; i <= 4; ++i) EXPECT_EQ(kps[i].y(), 0.5);
  for (size_t i = 5; i <= 8; ++i) EXPECT_EQ(kps[i].y(), -0.5);
  EXPECT_EQ(kps[9], Vec3::Zero());
}

TEST(SampleKeypoints, CenterIsBoundingBoxMidpoint) {
  TriangleMesh mesh = Cube(Vec3(4.0, 1.5, 1.8));
  for (Vec3& v : mesh.vertices) v += Vec3(0.3, -0.2, 1.0);
  mesh.vertices.push_back(Vec3(2.5, 0.0, 1.0));  // stretches +x
  const auto kps = SampleKeypoints(mesh, KeypointSpec{});
  EXPECT_LT((kps.back() - Vec3(0.4, -0.2, 1.0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SampleKeypoints, MoveLinearlyWithCoefficients) {
  const ShapeBasis basis = MakeSyntheticCarBasis();
  const int r = basis.num_components();
  ShapeCoeff a = ShapeCoeff::Constant(r, 0.2);
  ShapeCoeff b = ShapeCoeff::Constant(r, 0.6);
  const auto ka = SampleKeypoints(Deform(basis, a), basis.keypoints);
  const auto kb = SampleKeypoints(Deform(basis, b), basis.keypoints);
  const auto kmid = SampleKeypoints(Deform(basis, 0.5 * (a + b)), basis.keypoints);
  // Semantic keypoints are vertices and therefore exactly affine in s.
  for (size_t i = 0; i < basis.keypoints.semantic_indices.size(); ++i) {
    EXPECT_LT((0.5 * (ka[i] + kb[i]) - kmid[i]).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SampleKeypoints, StableOrdering) {
  const ShapeBasis basis = MakeSyntheticCarBasis();
  const ShapeCoeff s = ShapeCoeff::Constant(basis.num_components(), -0.4);
  EXPECT_EQ(SampleKeypoints(Deform(basis, s), basis.keypoints),
            SampleKeypoints(Deform(basis, s), basis.keypoints));
}

TEST(SampleKeypoints, IndexOutOfRange) {
  KeypointSpec spec;
  spec.semantic_indices = {8};
  EXPECT_EQ(CodeOf([&] { SampleKeypoints(Cube(), spec); }), ErrorCode::kIndexOutOfRange);
}

TEST(MeshDimensions, Examples) {
  const MeshExtent unit = MeshDimensions(Cube());
  EXPECT_EQ(unit.dims.l, 1.0);
  EXPECT_EQ(unit.dims.w, 1.0);
  EXPECT_EQ(unit.dims.h, 1.0);
  // x extent 4 is l, y extent 1.5 is h, z extent 1.8 is w.
  const MeshExtent scaled = MeshDimensions(Cube(Vec3(4.0, 1.5, 1.8)));
  EXPECT_DOUBLE_EQ(scaled.dims.l, 4.0);
  EXPECT_DOUBLE_EQ(scaled.dims.w, 1.8);
  EXPECT_DOUBLE_EQ(scaled.dims.h, 1.5);
  EXPECT_EQ(CodeOf([] { MeshDimensions(std::vector<Vec3>{}); }), ErrorCode::kEmptyMesh);
}

TEST(MeshDimensions, MatchesMinMaxScan) {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec3> pts(37);
    for (Vec3& p : pts) p = Vec3(u(rng), u(rng), u(rng));
    double lo[3] = {1e9, 1e9, 1e9}, hi[3] = {-1e9, -1e9, -1e9};
    for (const Vec3& p : pts) {
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], p(a));
        hi[a] = std::max(hi[a], p(a));
      }
    }
    const MeshExtent e = MeshDimensions(pts);
    EXPECT_EQ(e.dims.l, hi[0] - lo[0]);
    EXPECT_EQ(e.dims.h, hi[1] - lo[1]);
    EXPECT_EQ(e.dims.w, hi[2] - lo[2]);
    EXPECT_EQ(e.center, Vec3((lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2));
  }
}

TEST(NormalizeKeypoints, ExamplesAndRoundTrip) {
  const Dimensions dims{4.0, 1.6, 1.5};
  EXPECT_EQ(NormalizeKeypoints(std::vector<Vec3>{Vec3::Zero()}, dims)[0], Vec3::Zero());
  EXPECT_EQ(NormalizeKeypoints(std::vector<Vec3>{Vec3(2, 0, 0)}, dims)[0], Vec3(0.5, 0, 0));
  EXPECT_EQ(DenormalizeKeypoints(std::vector<Vec3>{Vec3(0.5, 0, 0)}, dims)[0], Vec3(2, 0, 0));
  std::mt19937_64 rng(54);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<Vec3> pts(100);
  for (Vec3& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  const auto back = DenormalizeKeypoints(NormalizeKeypoints(pts, dims), dims);
  for (size_t i = 0; i < pts.size(); ++i) {
    EXPECT_LT((back[i] - pts[i]).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(TransferKeypoints, Examples) {
  const Dimensions a{4.0, 1.6, 1.5};
  const Dimensions b{8.0, 3.2, 3.0};
  const Dimensions c{3.3, 1.9, 1.2};
  const std::vector<Vec3> pts = {Vec3(1.0, -0.5, 0.25), Vec3(-2.0, 0.75, 0.8)};
  EXPECT_EQ(TransferKeypoints(pts, a, a), pts);
  const auto doubled = TransferKeypoints(pts, a, b);
  for (size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(doubled[i], 2.0 * pts[i]);
  const auto there_and_back = TransferKeypoints(TransferKeypoints(pts, a, c), c, a);
  for (size_t i = 0; i < pts.size(); ++i) {
    EXPECT_LT((there_and_back[i] - pts[i]).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DimensionResidual, Examples) {
  const Dimensions mean{3.9, 1.6, 1.56};
  const Dimensions same = DecodeDimensionResidual(Vec3::Zero(), mean);
  EXPECT_EQ(same.l, mean.l);
  EXPECT_EQ(same.w, mean.w);
  EXPECT_EQ(same.h, mean.h);
  const Dimensions doubled = DecodeDimensionResidual(Vec3::Constant(std::log(2.0)), mean);
  EXPECT_DOUBLE_EQ(doubled.l, 7.8);
  EXPECT_DOUBLE_EQ(doubled.w, 3.2);
  EXPECT_DOUBLE_EQ(doubled.h, 3.12);
  const Vec3 r(0.1, -0.2, 0.05);
  EXPECT_LT((EncodeDimensionResidual(DecodeDimensionResidual(r, mean), mean) - r)
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(SyntheticCarBasis, Structure) {
  const ShapeBasis basis = MakeSyntheticCarBasis();
  EXPECT_EQ(basis.num_components(), 4);
  EXPECT_EQ(basis.keypoints.semantic_indices.size(), 16u);
  const MeshExtent e = MeshDimensions(basis.mean);
  EXPECT_NEAR(e.dims.l, 4.0, 1e-12);
  EXPECT_NEAR(e.dims.w, 1.7, 1e-12);
  EXPECT_NEAR(e.dims.h, 1.5, 1e-12);
  EXPECT_LT(e.center.cwiseAbs().maxCoeff(), 1e-12);
  // Components are orthonormal displacement fields.
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double dot = 0.0;
      for (size_t v = 0; v < basis.mean.vertices.size(); ++v) {
        dot += basis.components[static_cast<size_t>(i)][v].dot(
            basis.components[static_cast<size_t>(j)][v]);
      }
      EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(SyntheticCarBasis, DimensionsStayInEnvelope) {
  const ShapeBasis basis = MakeSyntheticCarBasis();
  const MeshExtent mean = MeshDimensions(basis.mean);
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    ShapeCoeff s(4);
    for (int k = 0; k < 4; ++k) s(k) = u(rng);
    const MeshExtent e = MeshDimensions(DeformVertices(basis, s));
    EXPECT_NEAR(e.dims.l / mean.dims.l, 1.0, 0.5);
    EXPECT_NEAR(e.dims.w / mean.dims.w, 1.0, 0.5);
    EXPECT_NEAR(e.dims.h / mean.dims.h, 1.0, 0.5);
  }
}

TEST(ShapeBasisIo, RoundTripIsExact) {
  const ShapeBasis basis = MakeSyntheticCarBasis();
  std::stringstream buffer;
  WriteShapeBasis(buffer, basis);
  const ShapeBasis back = ReadShapeBasis(buffer);
  EXPECT_EQ(back.mean.vertices, basis.mean.vertices);
  EXPECT_EQ(back.mean.faces, basis.mean.faces);
  EXPECT_EQ(back.components, basis.components);
  EXPECT_EQ(back.sigmas, basis.sigmas);
  EXPECT_EQ(back.keypoints.semantic_indices, basis.keypoints.semantic_indices);
}

TEST(ShapeBasisIo, AcceptsCommentsAndBlankLines) {
  std::istringstream in(
      "PCA-SHAPE v1  # header\n\n3 1 1\n0 0 0\n1 0 0 # v1\n0 1 0\n0 1 2\n"
      "component 2.5\n0 0 1\n0 0 1\n0 0 1\nkeypoints 2 0 2\n");
  const ShapeBasis basis = ReadShapeBasis(in);
  EXPECT_EQ(basis.mean.vertices.size(), 3u);
  EXPECT_EQ(basis.sigmas, std::vector<double>{2.5});
  EXPECT_EQ(basis.keypoints.semantic_indices, (std::vector<int>{0, 2}));
}

TEST(ShapeBasisIo, Errors) {
  auto read = [](const std::string& text) {
    std::istringstream in(text);
    ReadShapeBasis(in);
  };
  EXPECT_EQ(CodeOf([&] { read("OBJ\n"); }), ErrorCode::kUnsupportedFormat);
  EXPECT_EQ(CodeOf([&] { read("PCA-SHAPE v1\n2 0 0\n0 0 0\n"); }), ErrorCode::kMalformedLine);
  EXPECT_EQ(CodeOf([&] { read("PCA-SHAPE v1\n1 1 0\n0 0 0\n0 0 5\nkeypoints 0\n"); }),
            ErrorCode::kMalformedLine);
  EXPECT_EQ(CodeOf([&] { read("PCA-SHAPE v1\n1 0 1\n0 0 0\ncomponent -1\n0 0 0\nkeypoints 0\n"); }),
            ErrorCode::kMalformedLine);
  EXPECT_EQ(CodeOf([&] { read("PCA-SHAPE v1\n1 0 0\n0 x 0\nkeypoints 0\n"); }),
            ErrorCode::kMalformedLine);
  EXPECT_EQ(CodeOf([] { ReadShapeBasisFile("/nonexistent/basis.txt"); }), ErrorCode::kIoError);
}

}  // namespace
}  // namespace mono3d
