#pragma once

#include <array>
#include <span>
#include <vector>

#include "mono3d/geometry.h"

namespace mono3d {

class MaskImage;

// Yaw-rotated 3D box. `center` is the geometric center (not KITTI's
// bottom-center location).
struct Box3D {
  Vec3 center = Vec3::Zero();
  Dimensions dims;
  double yaw = 0.0;
};

// Corners in canonical order: indices 0-3 are the bottom face (y = +h/2),
// 4-7 the top face (y = -h/2). Each face is counter-clockwise viewed from
// above, starting at local (+l/2, +w/2):
//   (+x,+z) (-x,+z) (-x,-z) (+x,-z)
std::array<Vec3, 8> BoxCorners(const Box3D& box);

// Corner offsets of an axis-aligned box with the given half extents, in the
// same canonical order as BoxCorners().
std::array<Vec3, 8> CanonicalCornerOffsets(const Vec3& half_extents);

// Areas below this are treated as an empty intersection.
inline constexpr double kPolygonAreaTolerance = 1e-12;

double IouBev(const Box3D& a, const Box3D& b);
double Iou3d(const Box3D& a, const Box3D& b);

// Convex polygon helpers on the ground (x, z) plane; exposed for tests.
using Polygon2 = std::vector<Vec2>;
Polygon2 BevFootprint(const Box3D& box);
Polygon2 ClipConvexPolygon(const Polygon2& subject, const Polygon2& clip);
double PolygonArea(const Polygon2& polygon);

struct LabeledObject {
  Box3D box;
  const MaskImage* mask = nullptr;
};

struct LabelingQuality {
  double mean_mask_iou = 0.0;
  double mean_box_iou = 0.0;
};

// Arithmetic means of per-object mask IoU and 3D box IoU. Throws
// kLengthMismatch on misaligned or empty lists.
LabelingQuality EvaluateLabelingQuality(std::span<const LabeledObject> fits,
                                        std::span<const LabeledObject> truths);

}  // namespace mono3d
