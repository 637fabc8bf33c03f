#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fishmap/config.hpp"
#include "fishmap/depthfilter.hpp"
#include "fishmap/dynamic_mask.hpp"
#include "fishmap/evalkit.hpp"
#include "fishmap/planesweep.hpp"
#include "fishmap/rig_io.hpp"
#include "fishmap/synthworld.hpp"
#include "fishmap/tsdf_volume.hpp"

namespace fishmap {

enum class DepthSource { Stereo, GroundTruth };

struct FrameRef {
  int frameId = 0;
  double timestamp = 0;
};

/// On-disk sequence:
///   rig.txt, trajectory.txt (TUM, body to world), frames.txt (`frame_id timestamp`),
///   images/cam{c}/{frame:06d}.pgm, depth/cam{c}/{frame:06d}.pfm,
///   detections.txt, scene.txt (optional).
struct Dataset {
  std::filesystem::path root;
  CameraRig rig;
  std::vector<FrameRef> frames;
  std::vector<StampedPose> trajectory;
  DetectionsByFrame detections;

  static Dataset open(const std::filesystem::path& root, const std::optional<std::filesystem::path>& rigPath = {});

  std::filesystem::path imagePath(std::size_t camera, int frameId) const;
  std::filesystem::path depthPath(std::size_t camera, int frameId) const;
  /// Pose whose timestamp matches within 1e-6 s.
  std::optional<Posed> poseAt(double timestamp) const;
};

struct RunConfig {
  std::filesystem::path dataset;
  /// Defaults to dataset/rig.txt.
  std::optional<std::filesystem::path> rig;
  std::filesystem::path output = "out";
  /// Rig camera indices to use; empty uses every camera. Must include the reference.
  std::vector<int> cameras;
  ScaleMode scaleMode = ScaleMode::Multiscale;
  DepthSource depthSource = DepthSource::Stereo;
  FilterToggles filters;
  bool masking = true;

  SweepConfig sweep;
  FilterConfig filter;
  MaskConfig mask;
  TsdfConfig tsdf;
  unsigned minBlockObservations = 3;
  /// Per-voxel weight threshold applied on extraction, on top of the block gate.
  unsigned minVoxelWeight = 0;
  /// Depths beyond this range are dropped before fusion; 0 keeps everything.
  double maxFusionRange = 0;

  /// 0 keeps the OpenMP default.
  int threads = 0;
  /// Overlap depth estimation of upcoming frames with fusion (at most 3 frames in flight).
  bool pipelined = false;
  /// 0 processes every frame.
  int maxFrames = 0;
  bool writeDepthMaps = false;
  /// Write an intermediate map every N frames; 0 disables.
  int plyEvery = 0;
  /// Ground-truth map for accuracy/completeness; skipped when unset.
  std::optional<std::filesystem::path> referenceMap;
  std::vector<double> tolerances = kDefaultTolerances;
  bool writeOutputs = true;

  void validate() const;
  /// Overrides fields from `key = value` settings.
  void apply(const KeyValueConfig& kv);
};

ScaleMode parseScaleMode(const std::string& s);
std::string toString(ScaleMode mode);

struct StageTimes {
  double depth = 0;
  double filter = 0;
  double mask = 0;
  double allocate = 0;
  double integrate = 0;
  double prune = 0;

  double total() const { return depth + filter + mask + allocate + integrate + prune; }
  StageTimes& operator+=(const StageTimes& o);
};

struct FrameRecord {
  int frameId = 0;
  std::size_t validDepth = 0;
  std::size_t newBlocks = 0;
  std::size_t activeBlocks = 0;
  std::optional<DepthErrorStats> error;
  StageTimes times;
};

struct RunResult {
  std::vector<FrameRecord> frames;
  std::vector<std::string> warnings;
  StageTimes totalTimes;
  double wallSeconds = 0;
  PointCloud map;
  /// Same volume extracted without the observation gate.
  PointCloud ungatedMap;
  std::vector<MapQuality> quality;
  std::vector<MapQuality> ungatedQuality;
  std::size_t totalBlocks = 0;
};

/// Runs depth estimation, filtering, masking and fusion over the sequence,
/// writing map.ply, metrics.csv, summary.json and timing.json to cfg.output.
RunResult runPipeline(const RunConfig& cfg);

/// Deterministic JSON without timings (identical inputs give identical bytes).
std::string summaryJson(const RunConfig& cfg, const RunResult& result);
std::string timingJson(const RunResult& result);

struct GenerateConfig {
  Scene scene;
  CameraRig rig;
  double lengthM = 30;
  double speedMps = 3;
  double frameRateHz = 10;
  TrajectoryOptions trajectory;
  /// 0 keeps every frame of the trajectory.
  int maxFrames = 0;
};

/// Renders the sequence and writes it in the Dataset layout.
void generateDataset(const GenerateConfig& cfg, const std::filesystem::path& out);

/// Scene by preset name (fronto, urban, moving, far, noisy) or scene file path.
Scene sceneByName(const std::string& nameOrPath, std::uint64_t seed, double streetLength);

}  // namespace fishmap
