#pragma once

#include "mono3d/geometry.h"

namespace mono3d {

inline constexpr int kOrientationBins = 8;

// Observation angle as bin index plus in-bin residual. Bin k is centered at
// 2*pi*k/8; the residual lies in (-pi/8, pi/8], so an angle on a bin boundary
// belongs to the bin whose center is below it.
struct MultiBinCode {
  int bin = 0;
  double residual = 0.0;
};

double BinCenter(int bin);

MultiBinCode EncodeAlpha(double alpha);
// Returns an angle in [-pi, pi). Throws kInvalidBin for bins outside [0, 8).
double DecodeAlpha(const MultiBinCode& code);

// Global yaw from the allocentric angle and the ray through the object
// center: r_y = wrap(alpha + atan2(T_x, T_z)). Throws kDegenerateRay when the
// center lies on the camera's y axis.
double AlphaToYaw(double alpha, const Vec3& t);
double YawToAlpha(double yaw, const Vec3& t);

}  // namespace mono3d
