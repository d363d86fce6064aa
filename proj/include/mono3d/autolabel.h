#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mono3d/box_metrics.h"
#include "mono3d/geometry.h"
#include "mono3d/keypoint_io.h"
#include "mono3d/shape_model.h"
#include "mono3d/silhouette.h"

namespace mono3d {

struct AutolabelConfig {
  // Objective weights: L = alpha * L2D + beta * L3D.
  double alpha = 1.0;
  double beta = 5.0;

  // Adam. The per-group step scales multiply the learning rate, which is
  // equivalent to optimizing each group in rescaled units.
  double learning_rate = 0.002;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double shape_step_scale = 10.0;
  double angle_step_scale = 2.0;
  double translation_step_scale = 5.0;
  int max_steps = 200;
  double s_clamp = 3.0;
  bool optimize_pitch_roll = true;

  // The fit counts as converged once the relative loss change over
  // `convergence_window` steps falls below `convergence_tolerance`. When
  // `stop_at_convergence` is set the optimizer also stops there.
  double convergence_tolerance = 1e-4;
  int convergence_window = 10;
  bool stop_at_convergence = false;

  // Central finite-difference steps for the mask term.
  double fd_step_angle = 1e-3;        // rad
  double fd_step_translation = 1e-3;  // m
  double fd_step_shape = 1e-2;        // coefficient units
  double softness = kDefaultSoftness;  // px

  // Point preparation.
  double segment_margin = 0.1;  // m
  int ransac_iterations = 200;
  double ransac_inlier_threshold = 0.1;  // m
  double ransac_min_inlier_fraction = 0.2;
  double ground_normal_max_angle_deg = 30.0;
  int min_points = 10;

  // Throws kNonFiniteInput on invalid values.
  void Validate() const;
};

// Inputs for one vehicle. `points` are camera-frame LiDAR returns with the
// ground already removed.
struct Observation {
  MaskImage instance_mask;
  Box3D gt_box;
  std::vector<Vec3> points;
};

struct FitResult {
  ShapeCoeff s;
  Pose pose;
  double final_loss = 0.0;
  double final_l2d = 0.0;
  double final_l3d = 0.0;
  double mask_iou = 0.0;  // hard render vs. instance mask
  double box_iou = 0.0;   // fitted box vs. gt_box
  Box3D box;
  bool converged = false;
  int steps = 0;
  int best_step = 0;
  std::vector<double> loss_curve;  // loss at the start of each step
};

struct LossTerms {
  double total = 0.0;
  double l2d = 0.0;
  double l3d = 0.0;
};

struct GroundRemoval {
  std::vector<Vec3> points;  // input minus ground inliers
  Vec3 normal = Vec3::Zero();  // unit normal, oriented towards -y
  double d = 0.0;              // plane: normal . p + d = 0
  int inliers = 0;
  bool removed = false;
};

// Points whose box-frame coordinates lie within dims / 2 + margin.
std::vector<Vec3> SegmentPointsInBox(std::span<const Vec3> cloud, const Box3D& box,
                                     double margin);

// RANSAC plane fit over 3-point hypotheses whose normal lies within the
// configured angle of the camera's -y axis. Inliers of the best plane are
// removed only when they make up at least ransac_min_inlier_fraction of the
// input. Deterministic for a given seed. Throws kTooFewPoints below 3 points.
GroundRemoval RemoveGroundRansac(std::span<const Vec3> points, const AutolabelConfig& cfg,
                                 std::uint64_t seed);

// sum_i min_j || p_i - (R v_j + t) ||, nearest vertex by k-d tree with ties
// going to the lowest vertex index. Throws kEmptyInput.
double ChamferL3d(std::span<const Vec3> points, std::span<const Vec3> vertices,
                  const Pose& pose);

struct ChamferGradient {
  double loss = 0.0;
  Eigen::VectorXd d_shape;
  Vec3 d_angles = Vec3::Zero();  // (yaw, pitch, roll)
  Vec3 d_translation = Vec3::Zero();
};

// L3D and its analytic gradient with the nearest-neighbor assignment held
// fixed.
ChamferGradient ChamferL3dWithGradient(std::span<const Vec3> points, const ShapeBasis& basis,
                                       const ShapeCoeff& s, const Pose& pose);

LossTerms TotalLoss(const ShapeCoeff& s, const Pose& pose, const ShapeBasis& basis,
                    const Observation& obs, const CameraIntrinsics& k,
                    const AutolabelConfig& cfg);

// Box implied by the deformed mesh's extents under the pose (yaw only).
Box3D FittedBox(const ShapeBasis& basis, const ShapeCoeff& s, const Pose& pose);

// Fits shape coefficients and pose to one observation. Translation and yaw
// start from gt_box, pitch, roll and coefficients from zero. Returns the best
// iterate. Throws kInsufficientPoints and kDivergedLoss.
FitResult Fit(const Observation& obs, const ShapeBasis& basis, const CameraIntrinsics& k,
              const AutolabelConfig& cfg);

// Segmentation, ground removal and fitting from a raw camera-frame cloud.
struct LabelingInput {
  std::vector<Vec3> cloud;
  MaskImage instance_mask;
  Box3D gt_box;
};
FitResult LabelObject(const LabelingInput& input, const ShapeBasis& basis,
                      const CameraIntrinsics& k, const AutolabelConfig& cfg,
                      std::uint64_t seed);

// Keypoint record for a fitted object: 3D keypoints in a yaw-only object
// frame (pitch and roll folded into the coordinates), normalized by the mesh
// dimensions; 2D keypoints are their projections; confidences are 1.
KeypointRecord ExportKeypointLabels(const FitResult& result, const ShapeBasis& basis,
                                    const KeypointSpec& spec, const CameraIntrinsics& k,
                                    const std::string& id);

}  // namespace mono3d
