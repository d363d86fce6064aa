#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mono3d/geometry.h"
#include "mono3d/pose_solver.h"

namespace mono3d {

// One object's keypoint correspondences in the plain-text record format:
//
//   object <id>
//   intrinsics <fx> <fy> <cx> <cy>
//   yaw <r_y>
//   dims <l> <w> <h>          (optional; 3D keypoints are then normalized)
//   keypoints <n>
//   <u> <v> <x> <y> <z> <cu> <cv>     (n lines)
//
// Fields are whitespace-delimited, '#' starts a comment, blank lines are
// ignored. Records follow each other in one file.
struct KeypointRecord {
  std::string id;
  CameraIntrinsics intrinsics;
  double yaw = 0.0;
  std::optional<Dimensions> dims;
  KeypointSet keypoints;

  // Keypoints with metric 3D coordinates (denormalized when dims is set).
  KeypointSet MetricKeypoints() const;
};

// Throws kMalformedLine with "<source>:<line>" in the message.
std::vector<KeypointRecord> ReadKeypointRecords(std::istream& in,
                                                const std::string& source = "<stream>");
std::vector<KeypointRecord> ReadKeypointFile(const std::string& path);

void WriteKeypointRecords(std::ostream& out, std::span<const KeypointRecord> records);
void WriteKeypointFile(const std::string& path, std::span<const KeypointRecord> records);

}  // namespace mono3d
