#include "mono3d/kitti_io.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mono3d/error.h"

namespace mono3d {
namespace {

constexpr double kPi = std::numbers::pi;

template <typename F>
ErrorCode CodeOf(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{};
}

std::filesystem::path TempPath(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mono3d_kitti_io_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

constexpr const char* kCalibFixture =
    "P0: 7.215377e+02 0.000000e+00 6.095593e+02 0.000000e+00 0.000000e+00 7.215377e+02 "
    "1.728540e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00\n"
    "P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 "
    "1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03\n"
    "R0_rect: 9.999239e-01 9.837760e-03 -7.445048e-03 -9.869795e-03 9.999421e-01 "
    "-4.278459e-03 7.402527e-03 4.351614e-03 9.999631e-01\n"
    "Tr_velo_to_cam: 7.533745e-03 -9.999714e-01 -6.166020e-04 -4.069766e-03 "
    "1.480249e-02 7.280733e-04 -9.998902e-01 -7.631618e-02 9.998621e-01 7.523790e-03 "
    "1.480755e-02 -2.717806e-01\n"
    "Tr_imu_to_velo: 9.999976e-01 7.553071e-04 -2.035826e-03 -8.086759e-01 -7.854027e-04 "
    "9.998898e-01 -1.482298e-02 3.195559e-01 2.024406e-03 1.482454e-02 9.998881e-01 "
    "-7.997231e-01\n";

TEST(ParseLabelLine, DevkitExample) {
  const KittiLabel label = ParseLabelLine(
      "Car 0.00 0 -1.58 587.0 173.3 614.1 200.1 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59");
  EXPECT_EQ(label.type, "Car");
  EXPECT_EQ(label.truncation, 0.0);
  EXPECT_EQ(label.occlusion, 0);
  EXPECT_EQ(label.alpha, -1.58);
  EXPECT_EQ(label.bbox, (std::array<double, 4>{587.0, 173.3, 614.1, 200.1}));
  EXPECT_EQ(label.h, 1.65);
  EXPECT_EQ(label.w, 1.67);
  EXPECT_EQ(label.l, 3.64);
  EXPECT_EQ(label.location, Vec3(-0.65, 1.71, 46.70));
  EXPECT_EQ(label.rotation_y, -1.59);
  EXPECT_FALSE(label.score.has_value());
}

TEST(ParseLabelLine, ScoreField) {
  const KittiLabel label = ParseLabelLine(
      "Pedestrian 0.5 2 0.1 1 2 3 4 1.8 0.6 0.9 1 2 3 0.2 0.875");
  ASSERT_TRUE(label.score.has_value());
  EXPECT_EQ(*label.score, 0.875);
  EXPECT_EQ(label.occlusion, 2);
}

TEST(ParseLabelLine, MalformedLines) {
  for (const char* line : {"", "Car 0 0 0", "Car 0.00 0 -1.58 587.0 173.3 614.1 200.1 1.65 "
                                            "1.67 3.64 -0.65 1.71 46.70 abc",
                           "Car 0 0 0 1 2 3 4 1 1 1 1 1 1 1 1 1"}) {
    EXPECT_EQ(CodeOf([&] { ParseLabelLine(line); }), ErrorCode::kMalformedLine) << line;
  }
}

TEST(LabelFormat, RoundTripGenerated) {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> unit(-50.0, 50.0);
  std::uniform_int_distribution<int> occ(0, 3);
  std::vector<KittiLabel> labels;
  for (int i = 0; i < 100; ++i) {
    KittiLabel label;
    label.type = i % 3 == 0 ? "Car" : (i % 3 == 1 ? "Van" : "Cyclist");
    label.truncation = std::abs(unit(rng)) / 50.0;
    label.occlusion = occ(rng);
    label.alpha = unit(rng) / 16.0;
    for (double& b : label.bbox) b = std::abs(unit(rng)) * 20.0;
    label.h = 1.0 + std::abs(unit(rng)) / 50.0;
    label.w = 1.0 + std::abs(unit(rng)) / 50.0;
    label.l = 2.0 + std::abs(unit(rng)) / 20.0;
    label.location = Vec3(unit(rng), unit(rng) / 20.0, std::abs(unit(rng)));
    label.rotation_y = unit(rng) / 16.0;
    if (i % 2 == 0) label.score = std::abs(unit(rng)) / 50.0;
    EXPECT_EQ(ParseLabelLine(FormatLabelLine(label)), label);
    labels.push_back(label);
  }
  const std::string path = TempPath("labels.txt").string();
  WriteLabelFile(path, labels);
  EXPECT_EQ(ReadLabelFile(path), labels);
}

TEST(LabelToBox, BottomCenterToGeometricCenter) {
  KittiLabel label = ParseLabelLine(
      "Car 0.00 0 -1.58 587.0 173.3 614.1 200.1 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59");
  const Box3D box = LabelToBox(label);
  EXPECT_NEAR(box.center.y(), 1.71 - 0.825, 1e-12);
  EXPECT_EQ(box.dims.l, 3.64);
  const KittiLabel back = BoxToLabel(box);
  EXPECT_LT((back.location - label.location).norm(), 1e-12);
  EXPECT_EQ(back.rotation_y, label.rotation_y);
}

TEST(ParseCalib, RealFormatFixture) {
  std::istringstream in(kCalibFixture);
  const CalibSet calib = ParseCalib(in);
  EXPECT_EQ(calib.p2(0, 0), 721.5377);
  EXPECT_EQ(calib.p2(0, 3), 44.85728);
  EXPECT_EQ(calib.p2(2, 3), 2.745884e-03);
  EXPECT_EQ(calib.r0_rect(1, 0), -9.869795e-03);
  EXPECT_EQ(calib.tr_velo_to_cam(2, 3), -2.717806e-01);
  const CameraIntrinsics k = IntrinsicsFromP2(calib);
  EXPECT_EQ(k.fx, 721.5377);
  EXPECT_EQ(k.fy, 721.5377);
  EXPECT_EQ(k.cx, 609.5593);
  EXPECT_EQ(k.cy, 172.854);
  const Mat3 r = calib.r0_rect;
  EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(ParseCalib, RoundTrip) {
  std::mt19937_64 rng(72);
  std::uniform_real_distribution<double> unit(-1000.0, 1000.0);
  for (int i = 0; i < 100; ++i) {
    CalibSet calib;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        calib.p2(r, c) = unit(rng);
        calib.tr_velo_to_cam(r, c) = unit(rng) / 1000.0;
        if (c < 3) calib.r0_rect(r, c) = unit(rng) / 1000.0;
      }
    }
    std::stringstream s;
    WriteCalib(s, calib);
    const CalibSet back = ParseCalib(s);
    EXPECT_EQ(back.p2, calib.p2);
    EXPECT_EQ(back.r0_rect, calib.r0_rect);
    EXPECT_EQ(back.tr_velo_to_cam, calib.tr_velo_to_cam);
  }
  std::istringstream in(kCalibFixture);
  const CalibSet calib = ParseCalib(in);
  const std::string path = TempPath("calib.txt").string();
  WriteCalibFile(path, calib);
  const CalibSet back = ReadCalibFile(path);
  EXPECT_EQ(back.p2, calib.p2);
  EXPECT_EQ(back.tr_velo_to_cam, calib.tr_velo_to_cam);
}

TEST(ParseCalib, MissingKey) {
  for (const char* drop : {"P2:", "R0_rect:", "Tr_velo_to_cam:"}) {
    std::istringstream all(kCalibFixture);
    std::string text, line;
    while (std::getline(all, line)) {
      if (line.rfind(drop, 0) != 0) text += line + "\n";
    }
    std::istringstream in(text);
    EXPECT_EQ(CodeOf([&] { ParseCalib(in); }), ErrorCode::kMissingKey) << drop;
  }
}

TEST(IntrinsicsFromP2, MatchesP2Projection) {
  std::istringstream in(kCalibFixture);
  CalibSet calib = ParseCalib(in);
  calib.p2.col(3).setZero();
  const CameraIntrinsics k = IntrinsicsFromP2(calib);
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> coord(-10.0, 10.0);
  std::uniform_real_distribution<double> depth(2.0, 70.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p(coord(rng), coord(rng) / 5.0, depth(rng));
    const Vec3 h = calib.p2 * p.homogeneous();
    const Vec2 expected = h.head<2>() / h.z();
    EXPECT_LT((Project(p, k).pixel - expected).cwiseAbs().maxCoeff(), 1e-9);
  }
}

std::vector<unsigned char> FloatBytes(std::initializer_list<float> values) {
  std::vector<unsigned char> bytes;
  for (float v : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(bits >> (8 * i)));
  }
  return bytes;
}

TEST(ParseVelodyne, ByteFixture) {
  // 1.0f = 00 00 80 3f, -2.5f = 00 00 20 c0 (little-endian).
  const std::vector<unsigned char> bytes = {
      0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0, 0x00, 0x00, 0x00, 0x00,
      0x00, 0x00, 0x00, 0x3f,  // (1, -2.5, 0, 0.5)
      0x00, 0x00, 0x48, 0x42, 0x00, 0x00, 0x80, 0xbf, 0x00, 0x00, 0xc0, 0x3f,
      0x00, 0x00, 0x00, 0x00,  // (50, -1, 1.5, 0)
  };
  const PointCloud cloud = ParseVelodyne(bytes);
  ASSERT_EQ(cloud.size(), 2u);
  EXPECT_EQ(cloud[0].x, 1.0f);
  EXPECT_EQ(cloud[0].y, -2.5f);
  EXPECT_EQ(cloud[0].z, 0.0f);
  EXPECT_EQ(cloud[0].reflectance, 0.5f);
  EXPECT_EQ(cloud[1].x, 50.0f);
  EXPECT_EQ(cloud[1].y, -1.0f);
  EXPECT_EQ(cloud[1].z, 1.5f);
  EXPECT_EQ(cloud[1].reflectance, 0.0f);
  EXPECT_EQ(SerializeVelodyne(cloud), bytes);
  EXPECT_EQ(FloatBytes({1.0f, -2.5f, 0.0f, 0.5f, 50.0f, -1.0f, 1.5f, 0.0f}), bytes);
}

TEST(ParseVelodyne, EmptyAndTruncated) {
  EXPECT_TRUE(ParseVelodyne({}).empty());
  const std::vector<unsigned char> bytes(17, 0);
  EXPECT_EQ(CodeOf([&] { ParseVelodyne(bytes); }), ErrorCode::kTruncatedFile);
  const std::string path = TempPath("trunc.bin").string();
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), 17);
  EXPECT_EQ(CodeOf([&] { ReadVelodyne(path); }), ErrorCode::kTruncatedFile);
}

TEST(ParseVelodyne, FileRoundTripBitExact) {
  std::mt19937_64 rng(74);
  std::uniform_real_distribution<float> coord(-80.0f, 80.0f);
  PointCloud cloud(1000);
  for (LidarPoint& p : cloud) p = {coord(rng), coord(rng), coord(rng), coord(rng) / 80.0f};
  const std::string path = TempPath("scan.bin").string();
  WriteVelodyne(path, cloud);
  EXPECT_EQ(std::filesystem::file_size(path), 16000u);
  const PointCloud back = ReadVelodyne(path);
  EXPECT_EQ(SerializeVelodyne(back), SerializeVelodyne(cloud));
}

TEST(VeloToCamera, IdentityAndTranslation) {
  const PointCloud cloud = {{1.0f, 2.0f, 3.0f, 0.0f}, {-4.0f, 0.5f, 10.0f, 1.0f}};
  CalibSet calib;
  calib.tr_velo_to_cam.leftCols<3>().setIdentity();
  auto pts = VeloToCamera(cloud, calib);
  EXPECT_EQ(pts[0], Vec3(1, 2, 3));
  EXPECT_EQ(pts[1], Vec3(-4, 0.5, 10));
  calib.tr_velo_to_cam.col(3) = Vec3(0.5, -1, 2);
  pts = VeloToCamera(cloud, calib);
  EXPECT_EQ(pts[0], Vec3(1.5, 1, 5));
  EXPECT_EQ(pts[1], Vec3(-3.5, -0.5, 12));
}

TEST(VeloToCamera, MatchesHomogeneousOracle) {
  std::mt19937_64 rng(75);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<float> coord(-50.0f, 50.0f);
  for (int t = 0; t < 20; ++t) {
    CalibSet calib;
    calib.r0_rect = RotationMatrixEuler(unit(rng), unit(rng), unit(rng));
    calib.tr_velo_to_cam.leftCols<3>() = RotationMatrixEuler(unit(rng), unit(rng), unit(rng));
    calib.tr_velo_to_cam.col(3) = Vec3(unit(rng), unit(rng), unit(rng));
    Eigen::Matrix4d r = Eigen::Matrix4d::Identity();
    r.topLeftCorner<3, 3>() = calib.r0_rect;
    Eigen::Matrix4d tr = Eigen::Matrix4d::Identity();
    tr.topRows<3>() = calib.tr_velo_to_cam;
    PointCloud cloud(50);
    for (LidarPoint& p : cloud) p = {coord(rng), coord(rng), coord(rng), 0.0f};
    const auto pts = VeloToCamera(cloud, calib);
    for (size_t i = 0; i < cloud.size(); ++i) {
      const Eigen::Vector4d h = r * tr * Eigen::Vector4d(cloud[i].x, cloud[i].y, cloud[i].z, 1);
      EXPECT_LT((pts[i] - h.head<3>()).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Mask, RoundTripExact) {
  std::mt19937_64 rng(76);
  std::bernoulli_distribution bit(0.3);
  for (int i = 0; i < 20; ++i) {
    MaskImage mask(17 + i, 9 + 2 * i);
    for (double& v : mask.values()) v = bit(rng) ? 1.0 : 0.0;
    const auto bytes = SerializeMask(mask);
    EXPECT_EQ(ParseMask(bytes), mask);
    EXPECT_EQ(SerializeMask(ParseMask(bytes)), bytes);
  }
  const MaskImage zeros(31, 7);
  const std::string path = TempPath("zeros.pgm").string();
  WriteMask(path, zeros);
  EXPECT_EQ(ReadMask(path), zeros);
}

TEST(Mask, ThresholdsAt128) {
  std::string text = "P5\n4 1\n255\n";
  text += std::string{'\x00', '\x7f', '\x80', '\xff'};
  const std::vector<unsigned char> bytes(text.begin(), text.end());
  const MaskImage mask = ParseMask(bytes);
  EXPECT_EQ(mask.at(0, 0), 0.0);
  EXPECT_EQ(mask.at(1, 0), 0.0);
  EXPECT_EQ(mask.at(2, 0), 1.0);
  EXPECT_EQ(mask.at(3, 0), 1.0);
}

TEST(Mask, UnsupportedFormats) {
  for (std::string text : {std::string("P2\n2 1\n255\n0 255\n"), std::string("P6\n1 1\n255\nabc"),
                           std::string("P5\n1 1\n65535\nab"), std::string("")}) {
    const std::vector<unsigned char> bytes(text.begin(), text.end());
    EXPECT_EQ(CodeOf([&] { ParseMask(bytes); }), ErrorCode::kUnsupportedFormat) << text;
  }
}

}  // namespace
}  // namespace mono3d
