#pragma once

#include <optional>
#include <span>
#include <string>

#include "mono3d/error.h"
#include "mono3d/keypoint_io.h"
#include "mono3d/pose_solver.h"

namespace mono3d::cli {

// Exit codes outside the ErrorCode range.
inline constexpr int kExitUsage = 64;
inline constexpr int kExitInternal = 70;

struct SolveOutcome {
  std::string id;
  std::optional<PoseSolution> solution;
  int exit_code = 0;  // ErrorCode value on failure
  std::string message;
};

// Solves one record the way `mono3d solve` does. Keypoints listed in
// `zero_weight` get both constraint weights set to 0.
SolveOutcome SolveRecord(const KeypointRecord& record, std::span<const int> zero_weight = {});

// Entry point of the `mono3d` binary; returns the process exit code.
int Main(int argc, char** argv);

}  // namespace mono3d::cli
