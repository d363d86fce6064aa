#include "mono3d/geometry.h"

#include <cmath>
#include <numbers>
#include <string>

#include "mono3d/error.h"

namespace mono3d {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kPointBehindCamera: return "PointBehindCamera";
    case ErrorCode::kTooFewKeypoints: return "TooFewKeypoints";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kAllWeightsZero: return "AllWeightsZero";
    case ErrorCode::kSingularNormalMatrix: return "SingularNormalMatrix";
    case ErrorCode::kNonPositiveDimension: return "NonPositiveDimension";
    case ErrorCode::kInvalidBin: return "InvalidBin";
    case ErrorCode::kDegenerateRay: return "DegenerateRay";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kEmptyMesh: return "EmptyMesh";
    case ErrorCode::kAllVerticesClipped: return "AllVerticesClipped";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kInsufficientPoints: return "InsufficientPoints";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kProjectionFailure: return "ProjectionFailure";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kMissingKey: return "MissingKey";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

Mat3 CameraIntrinsics::Matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

void CameraIntrinsics::Validate() const {
  if (!std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(cx) ||
      !std::isfinite(cy)) {
    throw Error(ErrorCode::kNonFiniteInput, "camera intrinsics must be finite");
  }
  if (fx <= 0.0 || fy <= 0.0) {
    throw Error(ErrorCode::kNonPositiveDimension,
                "focal lengths must be positive");
  }
}

void Dimensions::Validate() const {
  if (!(l > 0.0) || !(w > 0.0) || !(h > 0.0) || !std::isfinite(l) ||
      !std::isfinite(w) || !std::isfinite(h)) {
    throw Error(ErrorCode::kNonPositiveDimension,
                "dimensions must be positive, got l=" + std::to_string(l) +
                    " w=" + std::to_string(w) + " h=" + std::to_string(h));
  }
}

Mat3 Pose::Rotation() const { return RotationMatrixEuler(yaw, pitch, roll); }

double WrapAngle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  // In-range angles pass through untouched; the shift below is not exact.
  if (angle >= -std::numbers::pi && angle < std::numbers::pi) return angle;
  double wrapped = std::fmod(angle + std::numbers::pi, kTwoPi);
  if (wrapped < 0.0) wrapped += kTwoPi;
  wrapped -= std::numbers::pi;
  // fmod can land exactly on +pi after the shift for tiny negative inputs.
  if (wrapped >= std::numbers::pi) wrapped -= kTwoPi;
  return wrapped;
}

Mat3 RotationMatrixYaw(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Mat3 r;
  r << c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c;
  return r;
}

Mat3 RotationMatrixPitch(double pitch) {
  const double c = std::cos(pitch);
  const double s = std::sin(pitch);
  Mat3 r;
  r << 1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c;
  return r;
}

Mat3 RotationMatrixRoll(double roll) {
  const double c = std::cos(roll);
  const double s = std::sin(roll);
  Mat3 r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

Mat3 RotationMatrixEuler(double yaw, double pitch, double roll) {
  return RotationMatrixYaw(yaw) * RotationMatrixPitch(pitch) *
         RotationMatrixRoll(roll);
}

Vec3 TransformObjectToCamera(const Vec3& p, const Pose& pose) {
  return pose.Rotation() * p + pose.t;
}

Projection Project(const Vec3& p_cam, const CameraIntrinsics& k) {
  if (!(p_cam.z() > kDepthEpsilon)) {
    throw Error(ErrorCode::kPointBehindCamera,
                "point depth " + std::to_string(p_cam.z()) +
                    " is not in front of the camera");
  }
  return {Vec2(k.fx * p_cam.x() / p_cam.z() + k.cx,
               k.fy * p_cam.y() / p_cam.z() + k.cy),
          p_cam.z()};
}

Vec2 NormalizePixel(const CameraIntrinsics& k, const Vec2& pixel) {
  return {(pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy};
}

Vec2 DenormalizePixel(const CameraIntrinsics& k, const Vec2& normalized) {
  return {normalized.x() * k.fx + k.cx, normalized.y() * k.fy + k.cy};
}

}  // namespace mono3d
