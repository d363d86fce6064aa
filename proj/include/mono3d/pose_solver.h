#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "mono3d/error.h"
#include "mono3d/geometry.h"

namespace mono3d {

// One 2D/3D correspondence. Each keypoint contributes two constraint rows
// (u and v), each with its own confidence.
struct KeypointPair {
  Vec2 p2d = Vec2::Zero();  // pixels
  Vec3 p3d = Vec3::Zero();  // object-local, meters (or dimension-normalized)
  double conf_u = 1.0;
  double conf_v = 1.0;
};

using KeypointSet = std::vector<KeypointPair>;

// Stacked linear system A * T = B with per-row weights. Row 2i is the u-row
// of keypoint i, row 2i+1 its v-row.
struct ConstraintSystem {
  Eigen::Matrix<double, Eigen::Dynamic, 3> a;
  Eigen::VectorXd b;
  Eigen::VectorXd w;

  Eigen::Index rows() const { return a.rows(); }
};

struct PoseSolution {
  Vec3 t = Vec3::Zero();
  // sqrt(sum w r^2 / sum w) in normalized image units.
  double weighted_rms_residual = 0.0;
  int effective_rank = 0;
};

// Thrown when the weighted system does not pin down all three translation
// components. `unobservable` spans the null space of the weighted matrix.
class RankDeficientError : public Error {
 public:
  RankDeficientError(int rank, std::vector<Vec3> unobservable);

  int rank() const { return rank_; }
  const std::vector<Vec3>& unobservable() const { return unobservable_; }

 private:
  int rank_;
  std::vector<Vec3> unobservable_;
};

inline constexpr double kMinRowWeight = 1e-6;
inline constexpr double kRankTolerance = 1e-9;

ConstraintSystem AssembleSystem(std::span<const KeypointPair> keypoints,
                                double yaw, const CameraIntrinsics& k);

// Minimizes ||diag(sqrt(w)) (A t - B)|| via SVD of the weighted matrix.
// Singular values below sigma_max * kRankTolerance count as zero.
PoseSolution SolveTranslation(const ConstraintSystem& system);

// Solves (A^T W A) t = A^T W B by explicit 3x3 inversion. Cross-check for
// SolveTranslation.
PoseSolution SolveTranslationNormalEquations(const ConstraintSystem& system);

// Multiplies normalized 3D keypoints by the dimensions (x by l, y by h, z by w).
KeypointSet DenormalizeKeypoints3d(std::span<const KeypointPair> normalized,
                                   const Dimensions& dims);

}  // namespace mono3d
