#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fishmap/dynamic_mask.hpp"
#include "fishmap/geometry.hpp"
#include "fishmap/image.hpp"
#include "fishmap/rig_io.hpp"

namespace fishmap {

/// Band-limited value-noise texture. Intensity = base + contrast * (fbm - 0.5),
/// fbm in [0, 1]; contrast 0 gives a featureless surface.
struct Texture {
  double base = 0.5;
  double contrast = 0.6;
  /// Meters per lattice cell of the coarsest octave.
  double scale = 0.5;
  int octaves = 2;
};

enum class PrimitiveKind { Ground, Quad, Box, Sphere };

/// Scene primitive in a local frame placed at `center` (at time 0) and rotated
/// by `yawDeg` about world z.
///   Quad: rectangle in the local x-z plane with half sizes (halfExtents.x, halfExtents.z).
///   Box: local half sizes halfExtents.
///   Sphere: radius.
///   Ground: the plane z = 0; placement fields are ignored.
struct Primitive {
  int id = 0;
  PrimitiveKind kind = PrimitiveKind::Box;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double yawDeg = 0;
  Eigen::Vector3d halfExtents = Eigen::Vector3d::Ones();
  double radius = 1;
  Texture texture;
  /// Non-zero velocity makes the primitive a moving object: center(t) = center + velocity t.
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  int classId = 2;

  bool moving() const { return !velocity.isZero(0); }
  /// Local-to-world placement at time t.
  Posed localToWorld(double t) const;
  /// Box corners / quad corners / sphere bounding-box corners in world coordinates at time t.
  std::vector<Eigen::Vector3d> worldVertices(double t) const;
};

struct Scene {
  std::vector<Primitive> primitives;
  double skyIntensity = 0.85;
  std::uint64_t textureSeed = 1;
  /// Std-dev of additive Gaussian intensity noise.
  double noiseSigma = 0.01;

  bool empty() const { return primitives.empty(); }
  void validate() const;
};

/// Plain-text scene description, one primitive per line:
///
///     seed 7
///     sky 0.85
///     noise 0.01
///     ground base 0.5 contrast 0.6 scale 0.5 octaves 2
///     quad id 3 center 10 0 1.5 yaw 90 half 8 0 4 contrast 0
///     box id 4 center 5 3 0.75 half 2 0.9 0.75 velocity 0 -2 0 class 2
///     sphere id 5 center 12 -4 3 radius 1.2
Scene loadScene(const std::filesystem::path& path);
void saveScene(const std::filesystem::path& path, const Scene& scene);

struct RayHit {
  double range = 0;
  int primitiveIndex = -1;
  Eigen::Vector3d localPoint = Eigen::Vector3d::Zero();
};

/// Nearest intersection of the unit-direction ray with the scene at time t.
std::optional<RayHit> intersectScene(const Scene& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                     double t);

/// Noise-free texture intensity of primitive `index` at a local-frame point.
double textureIntensity(const Scene& scene, int primitiveIndex, const Eigen::Vector3d& localPoint);

struct FramePacket {
  int frameId = 0;
  double timestamp = 0;
  Posed bodyToWorld;
  std::vector<Image> images;
  /// Per camera; range along the viewing ray, 0 where nothing was hit.
  std::vector<Raster<float>> gtDepth;
  /// Moving objects visible in the reference camera.
  std::vector<DetectionBox> detections;
};

struct RenderOptions {
  bool withDepth = true;
  bool withNoise = true;
  /// Render only these cameras (others are left empty); empty renders all.
  std::vector<std::size_t> cameras;
};

/// Deterministic per-pixel ray-cast renderer for a fixed scene and rig.
class FisheyeRenderer {
 public:
  FisheyeRenderer(Scene scene, CameraRig rig);

  FramePacket render(const Posed& bodyToWorld, double t, int frameId, const RenderOptions& opts = {}) const;

  const Scene& scene() const { return scene_; }
  const CameraRig& rig() const { return rig_; }

 private:
  Scene scene_;
  CameraRig rig_;
  // per camera, row-major unit rays (NaN outside the model's field of view)
  std::vector<std::vector<Eigen::Vector3d>> rays_;
};

FramePacket renderFrame(const Scene& scene, const CameraRig& rig, const Posed& bodyToWorld, double t, int frameId = 0);

struct TrajectoryOptions {
  Eigen::Vector3d start = Eigen::Vector3d(0, 0, 1.0);
  double headingDeg = 0;
  /// Heading change per meter driven (1/m); 0 drives straight.
  double curvature = 0;
};

/// Poses spaced speed / frameRate meters apart along the ground, timestamps k / frameRate.
std::vector<StampedPose> scriptTrajectory(double lengthM, double speedMps, double frameRateHz,
                                          const TrajectoryOptions& opts = {});

/// Forward-looking rig: `count` cameras in a row across the vehicle (left to
/// right), `spacing` meters apart, `height` above the body origin, reference in the middle.
CameraRig makeLinearRig(int count = 5, double spacing = 0.3, double height = 0.5, FisheyeCamerad camera = {});

namespace scenes {

/// Textured wall facing the camera path at distance `distance` ahead of x = 0.
Scene frontoPlane(double distance, double halfWidth = 40, double halfHeight = 30);
/// Street canyon with facades, parked cars, poles and a closing wall.
Scene urbanStreet(std::uint64_t seed = 7, double streetLength = 60);
/// Urban street plus a textured box driving across the vehicle path.
Scene movingBox(std::uint64_t seed = 7, double streetLength = 60);
/// Far structure (30-50 m) in front of the camera with a near ground.
Scene farStructure(std::uint64_t seed = 11);
/// Ground, textured blocks and a featureless facade with noise sigma 0.02.
Scene noisyFacade(std::uint64_t seed = 5);

}  // namespace scenes

}  // namespace fishmap
