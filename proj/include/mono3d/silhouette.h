#pragma once

#include <array>
#include <span>
#include <vector>

#include "mono3d/geometry.h"
#include "mono3d/shape_model.h"

namespace mono3d {

// Per-pixel occupancy in [0, 1], row-major. Pixel (x, y) has its center at
// image coordinates (x, y).
class MaskImage {
 public:
  MaskImage() = default;
  MaskImage(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return values_.empty(); }

  double& at(int x, int y) { return values_[Index(x, y)]; }
  double at(int x, int y) const { return values_[Index(x, y)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  // Number of pixels with occupancy >= 0.5.
  int CountOccupied() const;

  bool operator==(const MaskImage&) const = default;

 private:
  size_t Index(int x, int y) const {
    return static_cast<size_t>(y) * static_cast<size_t>(width_) + static_cast<size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

inline constexpr double kDefaultSoftness = 1.5;

// Rasterizes the silhouette of a posed mesh. With softness == 0 a pixel is 1
// iff its center lies inside some projected triangle. With softness > 0 the
// occupancy is a smoothstep of the signed distance d (positive inside) to the
// silhouette contour, reaching the hard value for |d| >= 3 * softness.
//
// Faces with a vertex at z <= kDepthEpsilon are dropped. Throws kEmptyMesh
// for meshes without vertices and kAllVerticesClipped when no vertex is in
// front of the camera.
class SilhouetteRenderer {
 public:
  explicit SilhouetteRenderer(std::span<const std::array<int, 3>> faces);

  MaskImage Render(std::span<const Vec3> vertices, const Pose& pose,
                   const CameraIntrinsics& k, int width, int height,
                   double softness) const;

 private:
  struct Edge {
    int a = 0;
    int b = 0;
    int first = 0;  // offset into edge_faces_
    int count = 0;
  };

  std::vector<std::array<int, 3>> faces_;
  std::vector<Edge> edges_;
  std::vector<int> edge_faces_;
};

MaskImage RenderSilhouette(const TriangleMesh& mesh, const Pose& pose,
                           const CameraIntrinsics& k, int width, int height,
                           double softness);

// Sum of absolute per-pixel differences. Throws kSizeMismatch.
double MaskL1(const MaskImage& rendered, const MaskImage& target);

// Intersection over union of the masks thresholded at 0.5; 1 when both are
// empty. Throws kSizeMismatch.
double MaskIou(const MaskImage& a, const MaskImage& b);

}  // namespace mono3d
