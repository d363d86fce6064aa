#include "mono3d/orientation.h"

#include <cmath>
#include <numbers>
#include <string>

#include "mono3d/error.h"

namespace mono3d {
namespace {

constexpr double kBinWidth = 2.0 * std::numbers::pi / kOrientationBins;
constexpr double kMinRayNorm = 1e-9;

double RayAngle(const Vec3& t) {
  if (!t.allFinite()) {
    throw Error(ErrorCode::kNonFiniteInput, "object center must be finite");
  }
  if (std::hypot(t.x(), t.z()) <= kMinRayNorm) {
    throw Error(ErrorCode::kDegenerateRay,
                "object center lies on the camera y axis; ray angle undefined");
  }
  return std::atan2(t.x(), t.z());
}

}  // namespace

double BinCenter(int bin) { return kBinWidth * bin; }

MultiBinCode EncodeAlpha(double alpha) {
  if (!std::isfinite(alpha)) {
    throw Error(ErrorCode::kNonFiniteInput, "alpha must be finite");
  }
  const double a = WrapAngle(alpha);
  // a lies in (c_k - w/2, c_k + w/2]  <=>  k = ceil((a - w/2) / w).
  const int k = static_cast<int>(std::ceil((a - 0.5 * kBinWidth) / kBinWidth));
  MultiBinCode code;
  code.bin = ((k % kOrientationBins) + kOrientationBins) % kOrientationBins;
  code.residual = a - kBinWidth * k;
  return code;
}

double DecodeAlpha(const MultiBinCode& code) {
  if (code.bin < 0 || code.bin >= kOrientationBins) {
    throw Error(ErrorCode::kInvalidBin,
                "bin index " + std::to_string(code.bin) + " outside [0, 8)");
  }
  if (!std::isfinite(code.residual)) {
    throw Error(ErrorCode::kNonFiniteInput, "residual must be finite");
  }
  return WrapAngle(BinCenter(code.bin) + code.residual);
}

double AlphaToYaw(double alpha, const Vec3& t) {
  return WrapAngle(alpha + RayAngle(t));
}

double YawToAlpha(double yaw, const Vec3& t) {
  return WrapAngle(yaw - RayAngle(t));
}

}  // namespace mono3d
