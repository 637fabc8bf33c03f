#pragma once

#include <filesystem>
#include <limits>
#include <vector>

#include "fishmap/geometry.hpp"
#include "fishmap/image.hpp"

namespace fishmap {

struct DepthErrorStats {
  int frameId = 0;
  double medianAbsErr = 0;
  double meanAbsErr = 0;
  std::size_t validEvaluated = 0;
  /// No pixel was valid in both maps.
  bool empty = true;
};

/// Median and mean of |est - gt| over pixels valid in both maps.
DepthErrorStats depthErrorStats(const DepthMap& est, const DepthMap& gt, int frameId = 0);

struct MapQuality {
  double accuracy = 1;
  double completeness = 0;
  double t1 = 0;
  double t2 = 0;
};

/// Exact nearest-neighbor distances over a uniform grid. Queries farther than
/// `maxRadius` from every point report +infinity.
class NearestNeighborGrid {
 public:
  NearestNeighborGrid(const std::vector<Eigen::Vector3f>& points, double maxRadius);

  double distance(const Eigen::Vector3f& query) const;
  double maxRadius() const { return radius_; }

 private:
  std::int64_t key(const Eigen::Vector3i& cell) const;

  const std::vector<Eigen::Vector3f>& points_;
  double radius_;
  double cell_;
  Eigen::Vector3i origin_ = Eigen::Vector3i::Zero();
  Eigen::Vector3i dims_ = Eigen::Vector3i::Ones();
  // cell start offsets into order_ (CSR layout)
  std::vector<std::uint32_t> start_;
  std::vector<std::uint32_t> order_;
};

/// Nearest distances from each query to `reference`, capped at maxRadius (+inf beyond).
std::vector<double> nearestDistances(const std::vector<Eigen::Vector3f>& queries,
                                     const std::vector<Eigen::Vector3f>& reference, double maxRadius);

/// accuracy: share of Sc within t1 of Sgt (1 when Sc is empty);
/// completeness: share of Sgt within t2 of Sc.
MapQuality accuracyCompleteness(const PointCloud& sc, const PointCloud& sgt, double t1, double t2);

inline const std::vector<double> kDefaultTolerances = {0.05, 0.10, 0.15, 0.20, 0.25};

/// One MapQuality per tolerance (t1 = t2 = t), sharing a single set of distance queries.
std::vector<MapQuality> toleranceSweep(const PointCloud& sc, const PointCloud& sgt,
                                       const std::vector<double>& tolerances = kDefaultTolerances);

/// Z-buffered splat of world points into the camera (minimum range per pixel).
DepthMap projectGtDepth(const PointCloud& cloud, const FisheyeCamerad& cam, const Posed& worldToCam);

/// `frame_id,median,mean,n` rows; empty frames are written with n = 0 and nan errors.
void writeMetricsCsv(const std::filesystem::path& path, const std::vector<DepthErrorStats>& stats);
std::vector<DepthErrorStats> readMetricsCsv(const std::filesystem::path& path);

}  // namespace fishmap
