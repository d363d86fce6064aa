#pragma once

#include <random>
#include <vector>

#include "mono3d/autolabel.h"
#include "mono3d/box_metrics.h"
#include "mono3d/geometry.h"
#include "mono3d/pose_solver.h"
#include "mono3d/shape_model.h"

// Seeded scene generators standing in for KITTI data in tests, the
// acceptance suite and `mono3d synth`.
namespace mono3d::synthetic {

using Rng = std::mt19937_64;

// KITTI camera-2 intrinsics (P2 of a typical training frame).
CameraIntrinsics KittiIntrinsics();

struct KeypointScene {
  CameraIntrinsics intrinsics;
  Pose pose;  // yaw only
  Dimensions dims;
  KeypointSet keypoints;  // metric object-local 3D, projected 2D, confidences 1
};

struct KeypointSceneOptions {
  int num_keypoints = 17;
  double min_depth = 4.0;
  double max_depth = 80.0;
};

// Random car-sized box, yaw uniform in [-pi, pi), keypoints uniform inside
// the box and projected through the pose.
KeypointScene GenerateKeypointScene(Rng& rng, const KeypointSceneOptions& options = {});

struct LabelingSceneOptions {
  int width = 256;
  int height = 256;
  int num_points = 300;
  double point_noise = 0.01;   // m, per axis
  double coeff_range = 1.0;    // s* uniform in [-range, range]^r
  double min_depth = 9.0;
  double max_depth = 15.0;
  double ground_tilt_deg = 0.0;  // tilt of the supporting plane
  int num_ground_points = 200;
  double camera_height = 1.65;  // m above the ground under the object
};

struct LabelingScene {
  CameraIntrinsics intrinsics;
  ShapeCoeff s;
  Pose pose;
  Box3D truth_box;  // extents of the deformed mesh under the pose (yaw only)
  MaskImage mask;   // hard silhouette of the true mesh
  std::vector<Vec3> object_points;  // noisy samples of camera-facing faces
  std::vector<Vec3> ground_points;  // samples of the supporting plane near the object

  // Cloud with both object and ground returns.
  std::vector<Vec3> Cloud() const;
  Observation MakeObservation() const;  // object points only, gt_box = truth_box
};

CameraIntrinsics LabelingIntrinsics(int width, int height);

LabelingScene GenerateLabelingScene(const ShapeBasis& basis, Rng& rng,
                                    const LabelingSceneOptions& options = {});

}  // namespace mono3d::synthetic
