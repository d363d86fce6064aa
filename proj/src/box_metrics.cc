#include "mono3d/box_metrics.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "mono3d/error.h"
#include "mono3d/silhouette.h"

namespace mono3d {
namespace {

double Cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Signed side of p relative to the directed edge a->b (> 0 on the left).
double Side(const Vec2& a, const Vec2& b, const Vec2& p) { return Cross(b - a, p - a); }

Vec2 IntersectLines(const Vec2& p0, const Vec2& p1, const Vec2& a, const Vec2& b) {
  const double s0 = Side(a, b, p0);
  const double s1 = Side(a, b, p1);
  const double t = s0 / (s0 - s1);
  return p0 + t * (p1 - p0);
}

double Volume(const Dimensions& d) { return d.l * d.w * d.h; }

// Identical boxes skip clipping so that iou(a, a) is exactly 1.
bool SameBox(const Box3D& a, const Box3D& b) {
  return a.center == b.center && a.dims.l == b.dims.l && a.dims.w == b.dims.w &&
         a.dims.h == b.dims.h && a.yaw == b.yaw;
}

}  // namespace

std::array<Vec3, 8> CanonicalCornerOffsets(const Vec3& half) {
  const double x = half.x();
  const double y = half.y();
  const double z = half.z();
  return {Vec3(x, y, z),   Vec3(-x, y, z),  Vec3(-x, y, -z),  Vec3(x, y, -z),
          Vec3(x, -y, z),  Vec3(-x, -y, z), Vec3(-x, -y, -z), Vec3(x, -y, -z)};
}

std::array<Vec3, 8> BoxCorners(const Box3D& box) {
  const Mat3 r = RotationMatrixYaw(box.yaw);
  std::array<Vec3, 8> corners = CanonicalCornerOffsets(0.5 * box.dims.AxisExtents());
  for (Vec3& c : corners) c = r * c + box.center;
  return corners;
}

Polygon2 BevFootprint(const Box3D& box) {
  const std::array<Vec3, 8> corners = BoxCorners(box);
  Polygon2 poly;
  poly.reserve(4);
  for (int i = 0; i < 4; ++i) poly.emplace_back(corners[i].x(), corners[i].z());
  // Yaw is a proper rotation about y, so the footprint stays counter-clockwise
  // in (x, z) coordinates.
  return poly;
}

Polygon2 ClipConvexPolygon(const Polygon2& subject, const Polygon2& clip) {
  Polygon2 output = subject;
  const size_t m = clip.size();
  for (size_t e = 0; e < m && !output.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % m];
    Polygon2 input;
    input.swap(output);
    const size_t n = input.size();
    for (size_t i = 0; i < n; ++i) {
      const Vec2& cur = input[i];
      const Vec2& prev = input[(i + n - 1) % n];
      const bool cur_in = Side(a, b, cur) >= 0.0;
      const bool prev_in = Side(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) output.push_back(IntersectLines(prev, cur, a, b));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(IntersectLines(prev, cur, a, b));
      }
    }
  }
  return output;
}

double PolygonArea(const Polygon2& polygon) {
  double twice = 0.0;
  const size_t n = polygon.size();
  for (size_t i = 0; i < n; ++i) twice += Cross(polygon[i], polygon[(i + 1) % n]);
  return 0.5 * twice;
}

double IouBev(const Box3D& a, const Box3D& b) {
  if (SameBox(a, b)) return 1.0;
  const double inter = PolygonArea(ClipConvexPolygon(BevFootprint(a), BevFootprint(b)));
  if (inter <= kPolygonAreaTolerance) return 0.0;
  const double area_a = a.dims.l * a.dims.w;
  const double area_b = b.dims.l * b.dims.w;
  return std::clamp(inter / (area_a + area_b - inter), 0.0, 1.0);
}

double Iou3d(const Box3D& a, const Box3D& b) {
  if (SameBox(a, b)) return 1.0;
  const double y_overlap =
      std::min(a.center.y() + 0.5 * a.dims.h, b.center.y() + 0.5 * b.dims.h) -
      std::max(a.center.y() - 0.5 * a.dims.h, b.center.y() - 0.5 * b.dims.h);
  if (y_overlap <= 0.0) return 0.0;
  const double area = PolygonArea(ClipConvexPolygon(BevFootprint(a), BevFootprint(b)));
  if (area <= kPolygonAreaTolerance) return 0.0;
  const double inter = area * y_overlap;
  return std::clamp(inter / (Volume(a.dims) + Volume(b.dims) - inter), 0.0, 1.0);
}

LabelingQuality EvaluateLabelingQuality(std::span<const LabeledObject> fits,
                                        std::span<const LabeledObject> truths) {
  if (fits.size() != truths.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(fits.size()) + " fits vs " +
                    std::to_string(truths.size()) + " ground-truth objects");
  }
  if (fits.empty()) {
    throw Error(ErrorCode::kLengthMismatch, "no objects to evaluate");
  }
  LabelingQuality q;
  for (size_t i = 0; i < fits.size(); ++i) {
    if (fits[i].mask == nullptr || truths[i].mask == nullptr) {
      throw Error(ErrorCode::kEmptyInput, "object " + std::to_string(i) + " has no mask");
    }
    q.mean_mask_iou += MaskIou(*fits[i].mask, *truths[i].mask);
    q.mean_box_iou += Iou3d(fits[i].box, truths[i].box);
  }
  q.mean_mask_iou /= static_cast<double>(fits.size());
  q.mean_box_iou /= static_cast<double>(fits.size());
  return q;
}

}  // namespace mono3d
