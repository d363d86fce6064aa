#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mono3d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Points closer to the image plane than this are rejected by Project().
inline constexpr double kDepthEpsilon = 1e-6;

// Pinhole camera. Camera axes follow KITTI: x right, y down, z forward.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 Matrix() const;
  // Throws kNonFiniteInput / kNonPositiveDimension on invalid parameters.
  void Validate() const;
};

// Object extents. Axis mapping in the object frame: l along x, h along y,
// w along z.
struct Dimensions {
  double l = 1.0;
  double w = 1.0;
  double h = 1.0;

  // Extents ordered by object axis: (l, h, w).
  Vec3 AxisExtents() const { return {l, h, w}; }
  static Dimensions FromAxisExtents(const Vec3& e) { return {e.x(), e.z(), e.y()}; }
  void Validate() const;
};

// Object-to-camera rigid transform. Rotation is R = Ry(yaw) * Rx(pitch) *
// Rz(roll); detection-time constraints use yaw only.
struct Pose {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  Vec3 t = Vec3::Zero();

  Mat3 Rotation() const;
};

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

// Wraps an angle into [-pi, pi).
double WrapAngle(double angle);

Mat3 RotationMatrixYaw(double yaw);
Mat3 RotationMatrixPitch(double pitch);
Mat3 RotationMatrixRoll(double roll);
Mat3 RotationMatrixEuler(double yaw, double pitch, double roll);

Vec3 TransformObjectToCamera(const Vec3& p, const Pose& pose);

// Throws kPointBehindCamera when p_cam.z <= kDepthEpsilon.
Projection Project(const Vec3& p_cam, const CameraIntrinsics& k);

// (u - cx) / fx, (v - cy) / fy.
Vec2 NormalizePixel(const CameraIntrinsics& k, const Vec2& pixel);
Vec2 DenormalizePixel(const CameraIntrinsics& k, const Vec2& normalized);

}  // namespace mono3d
