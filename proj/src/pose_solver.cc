#include "mono3d/pose_solver.h"

#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/SVD>

namespace mono3d {
namespace {

std::string DescribeDirections(int rank, const std::vector<Vec3>& dirs) {
  std::ostringstream out;
  out << "weighted system has rank " << rank << " < 3; unobservable directions:";
  for (const Vec3& d : dirs) {
    out << " (" << d.x() << ", " << d.y() << ", " << d.z() << ")";
  }
  return out.str();
}

// Counts usable rows and rejects negative or non-finite weights.
int CountWeightedRows(const ConstraintSystem& system) {
  if (system.a.rows() != system.b.rows() || system.a.rows() != system.w.rows()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "constraint system A, B and w disagree in row count");
  }
  int active = 0;
  for (Eigen::Index i = 0; i < system.w.rows(); ++i) {
    const double w = system.w(i);
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorCode::kNonFiniteInput,
                  "row weight " + std::to_string(i) + " must be finite and >= 0");
    }
    if (w > kMinRowWeight) ++active;
  }
  if (active == 0) {
    throw Error(ErrorCode::kAllWeightsZero, "no constraint row has positive weight");
  }
  return active;
}

double WeightedRms(const ConstraintSystem& system, const Vec3& t) {
  const Eigen::VectorXd r = system.a * t - system.b;
  const double wsum = system.w.sum();
  return std::sqrt(system.w.dot(r.cwiseAbs2()) / wsum);
}

}  // namespace

RankDeficientError::RankDeficientError(int rank, std::vector<Vec3> unobservable)
    : Error(ErrorCode::kRankDeficient, DescribeDirections(rank, unobservable)),
      rank_(rank),
      unobservable_(std::move(unobservable)) {}

ConstraintSystem AssembleSystem(std::span<const KeypointPair> keypoints,
                                double yaw, const CameraIntrinsics& k) {
  if (keypoints.size() < 2) {
    throw Error(ErrorCode::kTooFewKeypoints,
                "need at least 2 keypoints, got " + std::to_string(keypoints.size()));
  }
  if (!std::isfinite(yaw)) {
    throw Error(ErrorCode::kNonFiniteInput, "yaw must be finite");
  }
  k.Validate();

  const Eigen::Index n = static_cast<Eigen::Index>(keypoints.size());
  ConstraintSystem system;
  system.a.resize(2 * n, 3);
  system.b.resize(2 * n);
  system.w.resize(2 * n);

  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  for (Eigen::Index i = 0; i < n; ++i) {
    const KeypointPair& kp = keypoints[static_cast<size_t>(i)];
    const Vec2 uv = NormalizePixel(k, kp.p2d);
    if (!uv.allFinite() || !kp.p3d.allFinite() || !std::isfinite(kp.conf_u) ||
        !std::isfinite(kp.conf_v)) {
      throw Error(ErrorCode::kNonFiniteInput,
                  "keypoint " + std::to_string(i) + " has non-finite values");
    }
    const double x = kp.p3d.x();
    const double y = kp.p3d.y();
    const double z = kp.p3d.z();
    // Depth of the rotated point, with the sign flipped: x sin - z cos.
    const double neg_depth = x * s - z * c;

    system.a.row(2 * i) << -1.0, 0.0, uv.x();
    system.a.row(2 * i + 1) << 0.0, -1.0, uv.y();
    system.b(2 * i) = x * c + z * s + uv.x() * neg_depth;
    system.b(2 * i + 1) = y + uv.y() * neg_depth;
    system.w(2 * i) = kp.conf_u;
    system.w(2 * i + 1) = kp.conf_v;
  }
  return system;
}

PoseSolution SolveTranslation(const ConstraintSystem& system) {
  CountWeightedRows(system);

  const Eigen::VectorXd sqrt_w = system.w.cwiseSqrt();
  const Eigen::Matrix<double, Eigen::Dynamic, 3> aw = sqrt_w.asDiagonal() * system.a;
  const Eigen::VectorXd bw = sqrt_w.asDiagonal() * system.b;

  const Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 3>> svd(
      aw, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec3 sigma = svd.singularValues();
  const double cutoff = sigma(0) * kRankTolerance;
  int rank = 0;
  for (int i = 0; i < 3; ++i) {
    if (sigma(i) > cutoff) ++rank;
  }
  if (rank < 3) {
    std::vector<Vec3> null_dirs;
    for (int i = rank; i < 3; ++i) null_dirs.push_back(svd.matrixV().col(i));
    throw RankDeficientError(rank, std::move(null_dirs));
  }

  const Vec3 ut_b = svd.matrixU().transpose() * bw;
  const Vec3 t = svd.matrixV() * ut_b.cwiseQuotient(sigma);

  PoseSolution solution;
  solution.t = t;
  solution.effective_rank = rank;
  solution.weighted_rms_residual = WeightedRms(system, t);
  return solution;
}

PoseSolution SolveTranslationNormalEquations(const ConstraintSystem& system) {
  CountWeightedRows(system);

  const Mat3 n = system.a.transpose() * system.w.asDiagonal() * system.a;
  const Vec3 rhs = system.a.transpose() * system.w.asDiagonal() * system.b;

  // Adjugate inverse. Singularity is judged relative to the column scales.
  Mat3 adj;
  adj(0, 0) = n(1, 1) * n(2, 2) - n(1, 2) * n(2, 1);
  adj(0, 1) = n(0, 2) * n(2, 1) - n(0, 1) * n(2, 2);
  adj(0, 2) = n(0, 1) * n(1, 2) - n(0, 2) * n(1, 1);
  adj(1, 0) = n(1, 2) * n(2, 0) - n(1, 0) * n(2, 2);
  adj(1, 1) = n(0, 0) * n(2, 2) - n(0, 2) * n(2, 0);
  adj(1, 2) = n(0, 2) * n(1, 0) - n(0, 0) * n(1, 2);
  adj(2, 0) = n(1, 0) * n(2, 1) - n(1, 1) * n(2, 0);
  adj(2, 1) = n(0, 1) * n(2, 0) - n(0, 0) * n(2, 1);
  adj(2, 2) = n(0, 0) * n(1, 1) - n(0, 1) * n(1, 0);
  const double det = n(0, 0) * adj(0, 0) + n(0, 1) * adj(1, 0) + n(0, 2) * adj(2, 0);
  const double scale = n.col(0).norm() * n.col(1).norm() * n.col(2).norm();
  if (!(std::abs(det) > 1e-12 * scale) || scale == 0.0) {
    throw Error(ErrorCode::kSingularNormalMatrix,
                "normal matrix is singular (det=" + std::to_string(det) + ")");
  }

  PoseSolution solution;
  solution.t = adj * rhs / det;
  solution.effective_rank = 3;
  solution.weighted_rms_residual = WeightedRms(system, solution.t);
  return solution;
}

KeypointSet DenormalizeKeypoints3d(std::span<const KeypointPair> normalized,
                                   const Dimensions& dims) {
  dims.Validate();
  const Vec3 extents = dims.AxisExtents();
  KeypointSet out(normalized.begin(), normalized.end());
  for (KeypointPair& kp : out) kp.p3d = kp.p3d.cwiseProduct(extents);
  return out;
}

}  // namespace mono3d
