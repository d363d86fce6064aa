#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mono3d/box_metrics.h"
#include "mono3d/geometry.h"
#include "mono3d/silhouette.h"

namespace mono3d {

// One line of a KITTI object label file, fields in devkit order.
struct KittiLabel {
  std::string type;
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  std::array<double, 4> bbox{};  // left, top, right, bottom (pixels)
  double h = 0.0;
  double w = 0.0;
  double l = 0.0;
  Vec3 location = Vec3::Zero();  // bottom-center, camera frame
  double rotation_y = 0.0;
  std::optional<double> score;

  bool operator==(const KittiLabel&) const = default;
};

struct CalibSet {
  Eigen::Matrix<double, 3, 4> p2 = Eigen::Matrix<double, 3, 4>::Zero();
  Mat3 r0_rect = Mat3::Identity();
  Eigen::Matrix<double, 3, 4> tr_velo_to_cam = Eigen::Matrix<double, 3, 4>::Zero();
};

struct LidarPoint {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float reflectance = 0.0f;
};
using PointCloud = std::vector<LidarPoint>;

// Throws kMalformedLine for wrong field counts or non-numeric fields.
KittiLabel ParseLabelLine(std::string_view line);
std::string FormatLabelLine(const KittiLabel& label);
std::vector<KittiLabel> ReadLabelFile(const std::string& path);
void WriteLabelFile(const std::string& path, std::span<const KittiLabel> labels);

// Geometric-center box from a label (KITTI's location is the bottom center,
// y pointing down) and back. BoxToLabel fills only the 3D fields.
Box3D LabelToBox(const KittiLabel& label);
KittiLabel BoxToLabel(const Box3D& box, std::string type = "Car");

// Reads P2, R0_rect and Tr_velo_to_cam; other keys are ignored. Throws
// kMissingKey when one of them is absent.
CalibSet ParseCalib(std::istream& in);
CalibSet ReadCalibFile(const std::string& path);
void WriteCalib(std::ostream& out, const CalibSet& calib);
void WriteCalibFile(const std::string& path, const CalibSet& calib);

// fx, fy, cx, cy from P2. The fourth column (stereo baseline) is ignored.
CameraIntrinsics IntrinsicsFromP2(const CalibSet& calib);

// Little-endian float32 quadruples (x, y, z, reflectance). Throws
// kTruncatedFile when the size is not a multiple of 16 bytes.
PointCloud ReadVelodyne(const std::string& path);
PointCloud ParseVelodyne(std::span<const unsigned char> bytes);
void WriteVelodyne(const std::string& path, const PointCloud& cloud);
std::vector<unsigned char> SerializeVelodyne(const PointCloud& cloud);

// Camera-frame points: R0_rect * Tr_velo_to_cam * [x y z 1]^T.
std::vector<Vec3> VeloToCamera(const PointCloud& cloud, const CalibSet& calib);

// 8-bit binary PGM (P5). Reading thresholds at 128; writing stores
// round(255 * occupancy). Throws kUnsupportedFormat for other formats.
MaskImage ReadMask(const std::string& path);
MaskImage ParseMask(std::span<const unsigned char> bytes);
void WriteMask(const std::string& path, const MaskImage& mask);
std::vector<unsigned char> SerializeMask(const MaskImage& mask);

}  // namespace mono3d
