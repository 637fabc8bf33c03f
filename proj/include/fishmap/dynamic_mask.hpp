#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <vector>

#include "fishmap/image.hpp"

namespace fishmap {

/// Axis-aligned 2D detection in pixel coordinates (top-left x, y; size w, h).
struct DetectionBox {
  int frameId = 0;
  int classId = 0;
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double score = 1.0;
};

using DetectionsByFrame = std::map<int, std::vector<DetectionBox>>;

struct MaskConfig {
  int dilationPx = 2;
  double minScore = 0.5;
  /// Classes that mask; empty means every class does.
  std::vector<int> classes;
};

class DetectionParseError : public std::runtime_error {
 public:
  DetectionParseError(const std::string& what, int line) : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Invalidates every pixel inside a qualifying box grown by `dilationPx`
/// on each side and clipped to the image. Other pixels are untouched.
DepthMap applyMasks(const DepthMap& depth, const std::vector<DetectionBox>& boxes, const MaskConfig& cfg = {});

/// Reads `frame_id class_id x y w h [score]` lines; a missing score reads as 1.
DetectionsByFrame loadDetections(const std::filesystem::path& path);
void saveDetections(const std::filesystem::path& path, const DetectionsByFrame& detections);

}  // namespace fishmap
