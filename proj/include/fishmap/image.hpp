#pragma once

#include <Eigen/Core>
#include <vector>

namespace fishmap {

/// Row-major raster indexed (row, col).
template <typename Scalar>
using Raster = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grayscale intensities in [0, 1].
using Image = Raster<float>;

/// Per-pixel range along the viewing ray (meters, 0 = invalid) with the
/// winning and runner-up matching costs.
struct DepthMap {
  Raster<float> depth;
  Raster<float> bestCost;
  Raster<float> secondCost;

  DepthMap() = default;
  DepthMap(int width, int height)
      : depth(Raster<float>::Zero(height, width)),
        bestCost(Raster<float>::Ones(height, width)),
        secondCost(Raster<float>::Ones(height, width)) {}

  /// Depth-only map with zero costs, e.g. ground truth.
  static DepthMap fromDepth(const Raster<float>& depth) {
    DepthMap d(static_cast<int>(depth.cols()), static_cast<int>(depth.rows()));
    d.depth = depth;
    d.bestCost.setZero();
    d.secondCost.setOnes();
    return d;
  }

  int width() const { return static_cast<int>(depth.cols()); }
  int height() const { return static_cast<int>(depth.rows()); }
  bool valid(int row, int col) const { return depth(row, col) > 0; }
  void invalidate(int row, int col) { depth(row, col) = 0; }
  std::size_t validCount() const { return static_cast<std::size_t>((depth > 0).count()); }
};

struct PointCloud {
  std::vector<Eigen::Vector3f> points;
  /// Empty, or one weight per point.
  std::vector<float> weights;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

}  // namespace fishmap
