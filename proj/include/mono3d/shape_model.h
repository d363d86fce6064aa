#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mono3d/geometry.h"

namespace mono3d {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  // Throws kEmptyMesh / kIndexOutOfRange.
  void Validate() const;
};

// Ordered semantic vertex indices. Sampling appends the 8 bounding-box
// corners and the box center after these.
struct KeypointSpec {
  std::vector<int> semantic_indices;

  size_t size() const { return semantic_indices.size() + 9; }
};

using ShapeCoeff = Eigen::VectorXd;

// Linear deformable template: M(s) = M0 + sum_k s_k * sigma_k * p_k.
struct ShapeBasis {
  TriangleMesh mean;
  // One per-vertex displacement field per component.
  std::vector<std::vector<Vec3>> components;
  std::vector<double> sigmas;
  KeypointSpec keypoints;

  int num_components() const { return static_cast<int>(components.size()); }
  void Validate() const;
};

struct MeshExtent {
  Dimensions dims;
  Vec3 center = Vec3::Zero();  // AABB center in the object frame
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

TriangleMesh Deform(const ShapeBasis& basis, const ShapeCoeff& s);

// Vertices only; skips copying faces. Used in inner optimization loops.
std::vector<Vec3> DeformVertices(const ShapeBasis& basis, const ShapeCoeff& s);

std::vector<Vec3> SampleKeypoints(const TriangleMesh& mesh, const KeypointSpec& spec);

MeshExtent MeshDimensions(std::span<const Vec3> vertices);
inline MeshExtent MeshDimensions(const TriangleMesh& mesh) {
  return MeshDimensions(mesh.vertices);
}

// Componentwise division by (l, h, w); inverse of DenormalizeKeypoints3d.
std::vector<Vec3> NormalizeKeypoints(std::span<const Vec3> keypoints, const Dimensions& dims);
std::vector<Vec3> DenormalizeKeypoints(std::span<const Vec3> normalized,
                                       const Dimensions& dims);

// Re-targets keypoints defined for one object size onto another.
std::vector<Vec3> TransferKeypoints(std::span<const Vec3> keypoints,
                                    const Dimensions& src, const Dimensions& dst);

// Residuals are log-scale factors (dl, dw, dh) relative to the class mean.
Dimensions DecodeDimensionResidual(const Vec3& residual, const Dimensions& class_mean);
Vec3 EncodeDimensionResidual(const Dimensions& dims, const Dimensions& class_mean);

// "PCA-SHAPE v1" text format; see docs/basis_format.md.
ShapeBasis ReadShapeBasis(std::istream& in);
ShapeBasis ReadShapeBasisFile(const std::string& path);
void WriteShapeBasis(std::ostream& out, const ShapeBasis& basis);
void WriteShapeBasisFile(const std::string& path, const ShapeBasis& basis);

// Procedural car-like template (lofted body with cabin, r = 4 components)
// used when no measured basis is available.
ShapeBasis MakeSyntheticCarBasis();

}  // namespace mono3d
