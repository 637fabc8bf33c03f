#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fishmap/geometry.hpp"
#include "fishmap/image.hpp"

namespace fishmap {

enum class SweepDirection { Fronto, Ground };

/// Plane n.X = offset in the reference-camera frame.
struct SweepPlane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0;
  SweepDirection direction = SweepDirection::Fronto;
};

struct PlaneSet {
  std::vector<SweepPlane> planes;

  std::size_t size() const { return planes.size(); }
  std::size_t count(SweepDirection dir) const;
};

struct SweepConfig {
  int nFronto = 64;
  int nGround = 30;
  double zMin = 2.0;
  double zMax = 60.0;
  int windowFull = 9;
  int windowLow = 7;
  double groundBandHalfwidth = 0.5;
  int cropWidth = 572;
  int cropHeight = 332;
  /// Average only the k lowest per-view costs; 0 averages every valid view.
  int bestK = 0;
  /// Refine the winner with a parabola through its two same-direction neighbors.
  bool refine = false;

  void validate() const;
};

enum class ScaleMode { Full, Half, Multiscale };

/// Fronto-parallel planes uniform in inverse depth over [zMin, zMax], followed
/// by ground-parallel planes uniform over +-groundBandHalfwidth around `ground`.
PlaneSet generatePlanes(const SweepConfig& cfg, const PlaneEquation& ground);

/// Range along the unit ray `ray` to the plane, if the hit is in front of the
/// camera and no farther than `maxRange`.
std::optional<double> intersectPlane(const SweepPlane& plane, const Eigen::Vector3d& ray, double maxRange);

/// Transfers reference pixel p (continuous coordinates) through `plane` into the source camera.
std::optional<Eigen::Vector2d> warpPixel(const SweepPlane& plane, const FisheyeCamerad& refCam,
                                         const FisheyeCamerad& srcCam, const Posed& refToSrc,
                                         const Eigen::Vector2d& p, double maxRange);

/// (1 - ZNCC) / 2; empty when either patch has variance below 1e-8.
std::optional<double> znccCost(std::span<const float> a, std::span<const float> b);

struct SupportView {
  std::reference_wrapper<const Image> image;
  FisheyeCamerad camera;
  Posed refToSrc;
};

/// Winner-take-all plane sweep. Each plane's cost at a pixel is the mean
/// ZNCC cost over support views whose full window warps validly; pixels with
/// no valid plane get depth 0. The runner-up cost skips the planes next to the
/// winner in the same sweep direction.
DepthMap sweep(const Image& reference, const FisheyeCamerad& refCam, std::span<const SupportView> support,
               const PlaneSet& planes, int window, const SweepConfig& cfg);

/// Plane between `winner` and its better neighbor at the vertex of the cost
/// parabola (inverse-depth parameterization for fronto planes).
SweepPlane refinedPlane(const PlaneSet& planes, int winner, double costBefore, double costAt, double costAfter);

/// 2x2 box filter; odd trailing rows/columns are dropped.
Image downsample2x(const Image& image);

/// Nearest-neighbor upsampling of a half-resolution map to width x height.
DepthMap upsampleNearest(const DepthMap& low, int width, int height);

/// Top-left corner of the centered crop.
Eigen::Vector2i cropOrigin(int width, int height, int cropWidth, int cropHeight);

/// Depth for the rig's reference camera from synchronized images (indexed like rig.cameras).
/// Multiscale: half-resolution sweep upsampled everywhere, replaced inside the
/// centered full-resolution crop wherever the crop sweep is valid.
DepthMap multiscaleDepth(std::span<const Image> images, const CameraRig& rig, const PlaneSet& planes,
                         const SweepConfig& cfg, ScaleMode mode = ScaleMode::Multiscale);

}  // namespace fishmap
