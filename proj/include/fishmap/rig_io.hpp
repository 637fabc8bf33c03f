#pragma once

#include <filesystem>
#include <vector>

#include "fishmap/geometry.hpp"

namespace fishmap {

/// Plain-text rig description:
///
///     reference 2
///     camera
///       xi 1.0
///       fx 220  fy 220  cx 512  cy 272
///       width 1024  height 544
///       extrinsic tx ty tz qx qy qz qw   # rig-to-camera
///     end
///
/// '#' starts a comment. Keys inside a camera block may share a line.
CameraRig loadRig(const std::filesystem::path& path);
void saveRig(const std::filesystem::path& path, const CameraRig& rig);

struct StampedPose {
  double timestamp = 0;
  /// Maps body coordinates to world coordinates.
  Posed bodyToWorld;
};

/// TUM trajectory: `timestamp tx ty tz qx qy qz qw` per line.
std::vector<StampedPose> loadTrajectory(const std::filesystem::path& path);
void saveTrajectory(const std::filesystem::path& path, const std::vector<StampedPose>& trajectory);

}  // namespace fishmap
