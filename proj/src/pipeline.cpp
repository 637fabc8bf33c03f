#include "fishmap/pipeline.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fishmap/image_io.hpp"

namespace fishmap {
namespace {

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string frameName(int frameId, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.%s", frameId, ext);
  return buf;
}

void writeText(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::vector<FrameRef> loadFrames(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open frame list");
  std::vector<FrameRef> frames;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    FrameRef f;
    if (!(ss >> f.frameId)) continue;
    if (!(ss >> f.timestamp)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineNo) + ": expected 'frame_id timestamp'");
    }
    frames.push_back(f);
  }
  return frames;
}

struct Estimate {
  FrameRef frame;
  std::optional<Posed> bodyToWorld;
  DepthMap depth;
  std::optional<DepthErrorStats> error;
  StageTimes times;
};

}  // namespace

StageTimes& StageTimes::operator+=(const StageTimes& o) {
  depth += o.depth;
  filter += o.filter;
  mask += o.mask;
  allocate += o.allocate;
  integrate += o.integrate;
  prune += o.prune;
  return *this;
}

Dataset Dataset::open(const std::filesystem::path& root, const std::optional<std::filesystem::path>& rigPath) {
  Dataset ds;
  ds.root = root;
  ds.rig = loadRig(rigPath.value_or(root / "rig.txt"));
  ds.rig.validate(false);
  ds.frames = loadFrames(root / "frames.txt");
  ds.trajectory = loadTrajectory(root / "trajectory.txt");
  if (std::filesystem::exists(root / "detections.txt")) ds.detections = loadDetections(root / "detections.txt");
  return ds;
}

std::filesystem::path Dataset::imagePath(std::size_t camera, int frameId) const {
  return root / "images" / ("cam" + std::to_string(camera)) / frameName(frameId, "pgm");
}

std::filesystem::path Dataset::depthPath(std::size_t camera, int frameId) const {
  return root / "depth" / ("cam" + std::to_string(camera)) / frameName(frameId, "pfm");
}

std::optional<Posed> Dataset::poseAt(double timestamp) const {
  const auto it = std::lower_bound(trajectory.begin(), trajectory.end(), timestamp - 1e-6,
                                   [](const StampedPose& p, double t) { return p.timestamp < t; });
  if (it != trajectory.end() && std::abs(it->timestamp - timestamp) <= 1e-6) return it->bodyToWorld;
  for (const auto& p : trajectory) {
    if (std::abs(p.timestamp - timestamp) <= 1e-6) return p.bodyToWorld;
  }
  return std::nullopt;
}

ScaleMode parseScaleMode(const std::string& s) {
  if (s == "full") return ScaleMode::Full;
  if (s == "half") return ScaleMode::Half;
  if (s == "multiscale") return ScaleMode::Multiscale;
  throw std::invalid_argument("unknown scale mode '" + s + "' (expected full, half or multiscale)");
}

std::string toString(ScaleMode mode) {
  switch (mode) {
    case ScaleMode::Full:
      return "full";
    case ScaleMode::Half:
      return "half";
    case ScaleMode::Multiscale:
      return "multiscale";
  }
  return "multiscale";
}

void RunConfig::validate() const {
  if (dataset.empty()) throw std::invalid_argument("RunConfig: dataset path is required");
  if (threads < 0) throw std::invalid_argument("RunConfig: thread count must be >= 0");
  if (maxFusionRange < 0) throw std::invalid_argument("RunConfig: max fusion range must be >= 0");
  if (maxFrames < 0 || plyEvery < 0) throw std::invalid_argument("RunConfig: frame counts must be >= 0");
  for (double t : tolerances) {
    if (!(t > 0)) throw std::invalid_argument("RunConfig: tolerances must be positive");
  }
  sweep.validate();
  filter.validate();
  tsdf.validate();
}

void RunConfig::apply(const KeyValueConfig& kv) {
  if (auto v = kv.get("dataset")) dataset = *v;
  if (auto v = kv.get("rig")) rig = std::filesystem::path(*v);
  if (auto v = kv.get("output")) output = *v;
  cameras = kv.getIntList("cameras", cameras);
  if (auto v = kv.get("scale_mode")) scaleMode = parseScaleMode(*v);
  if (auto v = kv.get("depth_source")) {
    if (*v == "stereo") {
      depthSource = DepthSource::Stereo;
    } else if (*v == "groundtruth") {
      depthSource = DepthSource::GroundTruth;
    } else {
      throw std::invalid_argument("config key 'depth_source': expected stereo or groundtruth, got '" + *v + "'");
    }
  }
  filters.bestCost = kv.getBool("filter_cost", filters.bestCost);
  filters.uniqueness = kv.getBool("filter_uniqueness", filters.uniqueness);
  filters.consistency = kv.getBool("filter_consistency", filters.consistency);
  masking = kv.getBool("masking", masking);

  sweep.nFronto = kv.getInt("fronto_planes", sweep.nFronto);
  sweep.nGround = kv.getInt("ground_planes", sweep.nGround);
  sweep.zMin = kv.getDouble("z_min", sweep.zMin);
  sweep.zMax = kv.getDouble("z_max", sweep.zMax);
  sweep.windowFull = kv.getInt("window_full", sweep.windowFull);
  sweep.windowLow = kv.getInt("window_low", sweep.windowLow);
  sweep.groundBandHalfwidth = kv.getDouble("ground_band", sweep.groundBandHalfwidth);
  sweep.cropWidth = kv.getInt("crop_width", sweep.cropWidth);
  sweep.cropHeight = kv.getInt("crop_height", sweep.cropHeight);
  sweep.bestK = kv.getInt("best_k", sweep.bestK);
  sweep.refine = kv.getBool("refine", sweep.refine);

  filter.alphaUpper = kv.getDouble("alpha_upper", filter.alphaUpper);
  filter.alphaLower = kv.getDouble("alpha_lower", filter.alphaLower);
  filter.horizonRow = kv.getInt("horizon_row", filter.horizonRow);
  filter.beta = kv.getDouble("beta", filter.beta);
  filter.gamma = kv.getDouble("gamma", filter.gamma);
  filter.delta = kv.getDouble("delta", filter.delta);
  filter.consistencyWindow = kv.getInt("consistency_window", filter.consistencyWindow);

  mask.dilationPx = kv.getInt("mask_dilation", mask.dilationPx);
  mask.minScore = kv.getDouble("mask_min_score", mask.minScore);
  mask.classes = kv.getIntList("mask_classes", mask.classes);

  tsdf.voxelSize = kv.getDouble("voxel_size", tsdf.voxelSize);
  tsdf.mu = kv.getDouble("mu", tsdf.mu);
  tsdf.wMax = kv.getInt("w_max", tsdf.wMax);
  tsdf.localBoxSize.x() = kv.getDouble("local_box_x", tsdf.localBoxSize.x());
  tsdf.localBoxSize.y() = kv.getDouble("local_box_y", tsdf.localBoxSize.y());
  tsdf.localBoxSize.z() = kv.getDouble("local_box_z", tsdf.localBoxSize.z());
  const int minObs = kv.getInt("min_block_observations", int(minBlockObservations));
  if (minObs < 0) throw std::invalid_argument("config key 'min_block_observations': must be >= 0");
  minBlockObservations = unsigned(minObs);
  const int minWeight = kv.getInt("min_voxel_weight", int(minVoxelWeight));
  if (minWeight < 0) throw std::invalid_argument("config key 'min_voxel_weight': must be >= 0");
  minVoxelWeight = unsigned(minWeight);
  maxFusionRange = kv.getDouble("max_fusion_range", maxFusionRange);

  threads = kv.getInt("threads", threads);
  pipelined = kv.getBool("pipelined", pipelined);
  maxFrames = kv.getInt("max_frames", maxFrames);
  writeDepthMaps = kv.getBool("write_depth", writeDepthMaps);
  plyEvery = kv.getInt("ply_every", plyEvery);
  if (auto v = kv.get("reference_map")) referenceMap = std::filesystem::path(*v);
}

RunResult runPipeline(const RunConfig& cfg) {
  cfg.validate();
  const auto wall0 = Clock::now();
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

  const Dataset ds = Dataset::open(cfg.dataset, cfg.rig);
  CameraRig rig = ds.rig;
  std::vector<std::size_t> camIndex;
  if (cfg.cameras.empty()) {
    for (std::size_t i = 0; i < rig.size(); ++i) camIndex.push_back(i);
  } else {
    for (int c : cfg.cameras) {
      if (c < 0) throw std::invalid_argument("RunConfig: negative camera index");
      camIndex.push_back(std::size_t(c));
    }
    rig = ds.rig.subset(camIndex);
  }
  if (cfg.depthSource == DepthSource::Stereo) rig.validate(true);
  const std::size_t refDataset = camIndex[rig.reference];
  const FisheyeCamerad& refCam = rig.cameras[rig.reference];

  std::vector<FrameRef> frames = ds.frames;
  if (cfg.maxFrames > 0 && frames.size() > std::size_t(cfg.maxFrames)) frames.resize(std::size_t(cfg.maxFrames));

  RunResult result;

  // depth, filters and masks depend only on the frame's inputs
  auto estimate = [&](const FrameRef& frame) {
    Estimate e;
    e.frame = frame;
    e.bodyToWorld = ds.poseAt(frame.timestamp);
    if (!e.bodyToWorld) return e;
    const Posed worldToRef = rig.rigToCamera[rig.reference] * e.bodyToWorld->inverse();

    auto t0 = Clock::now();
    const auto gtPath = ds.depthPath(refDataset, frame.frameId);
    std::optional<DepthMap> gt;
    if (std::filesystem::exists(gtPath)) gt = DepthMap::fromDepth(readPfm(gtPath));
    if (cfg.depthSource == DepthSource::GroundTruth) {
      if (!gt) throw std::runtime_error(gtPath.string() + ": ground-truth depth missing");
      e.depth = *gt;
    } else {
      std::vector<Image> images;
      for (std::size_t c : camIndex) images.push_back(readPgm(ds.imagePath(c, frame.frameId)));
      const PlaneSet planes = generatePlanes(cfg.sweep, groundInCamera(worldToRef));
      e.depth = multiscaleDepth(images, rig, planes, cfg.sweep, cfg.scaleMode);
    }
    e.times.depth = secondsSince(t0);

    t0 = Clock::now();
    if (cfg.depthSource == DepthSource::Stereo) e.depth = applyFilters(e.depth, cfg.filter, cfg.filters);
    e.times.filter = secondsSince(t0);

    t0 = Clock::now();
    if (cfg.masking) {
      const auto it = ds.detections.find(frame.frameId);
      if (it != ds.detections.end()) e.depth = applyMasks(e.depth, it->second, cfg.mask);
    }
    e.times.mask = secondsSince(t0);

    if (cfg.maxFusionRange > 0) e.depth.depth = (e.depth.depth > float(cfg.maxFusionRange)).select(0.0f, e.depth.depth);
    if (gt) e.error = depthErrorStats(e.depth, *gt, frame.frameId);
    return e;
  };

  TsdfVolume volume(cfg.tsdf);
  bool centered = false;
  auto fuse = [&](Estimate e) {
    if (!e.bodyToWorld) {
      result.warnings.push_back("frame " + std::to_string(e.frame.frameId) + ": no pose at timestamp " +
                                std::to_string(e.frame.timestamp) + ", skipped");
      std::cerr << "warning: " << result.warnings.back() << "\n";
      return;
    }
    const Posed worldToRef = rig.rigToCamera[rig.reference] * e.bodyToWorld->inverse();
    const Eigen::Vector3d vehicle = e.bodyToWorld->translation();
    if (!centered) {
      volume.pruneAndSwap(vehicle);
      centered = true;
    }
    FrameRecord rec;
    rec.frameId = e.frame.frameId;
    rec.validDepth = e.depth.validCount();
    rec.error = e.error;
    rec.times = e.times;

    auto t0 = Clock::now();
    rec.newBlocks = volume.allocate(e.depth, refCam, worldToRef).size();
    rec.times.allocate = secondsSince(t0);
    t0 = Clock::now();
    volume.integrate(e.depth, refCam, worldToRef);
    rec.times.integrate = secondsSince(t0);
    t0 = Clock::now();
    volume.pruneAndSwap(vehicle);
    rec.times.prune = secondsSince(t0);
    rec.activeBlocks = volume.activeCount();

    if (cfg.writeOutputs && cfg.writeDepthMaps) {
      writePfm(cfg.output / "depth" / frameName(rec.frameId, "pfm"), e.depth.depth);
    }
    result.totalTimes += rec.times;
    result.frames.push_back(rec);
    if (cfg.writeOutputs && cfg.plyEvery > 0 && result.frames.size() % std::size_t(cfg.plyEvery) == 0) {
      writePly(cfg.output / "maps" / ("map_" + frameName(rec.frameId, "ply")),
               volume.extractPoints(cfg.minBlockObservations, cfg.minVoxelWeight));
    }
  };

  if (cfg.pipelined) {
    std::deque<std::future<Estimate>> inFlight;
    std::size_t next = 0;
    while (next < frames.size() || !inFlight.empty()) {
      while (next < frames.size() && inFlight.size() < 3) {
        inFlight.push_back(std::async(std::launch::async, estimate, frames[next++]));
      }
      Estimate e = inFlight.front().get();
      inFlight.pop_front();
      fuse(std::move(e));
    }
  } else {
    for (const auto& f : frames) fuse(estimate(f));
  }

  result.map = volume.extractPoints(cfg.minBlockObservations, cfg.minVoxelWeight);
  result.ungatedMap = volume.extractPoints(0);
  result.totalBlocks = volume.totalBlocks();
  if (cfg.referenceMap) {
    const PointCloud reference = readPly(*cfg.referenceMap);
    result.quality = toleranceSweep(result.map, reference, cfg.tolerances);
    result.ungatedQuality = toleranceSweep(result.ungatedMap, reference, cfg.tolerances);
  }
  result.wallSeconds = secondsSince(wall0);

  if (cfg.writeOutputs) {
    std::filesystem::create_directories(cfg.output);
    writePly(cfg.output / "map.ply", result.map);
    std::vector<DepthErrorStats> stats;
    for (const auto& f : result.frames) {
      if (f.error) stats.push_back(*f.error);
    }
    writeMetricsCsv(cfg.output / "metrics.csv", stats);
    writeText(cfg.output / "summary.json", summaryJson(cfg, result));
    writeText(cfg.output / "timing.json", timingJson(result));
  }
  return result;
}

namespace {

nlohmann::ordered_json qualityJson(const std::vector<MapQuality>& q) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& m : q) {
    arr.push_back({{"tolerance", m.t1}, {"accuracy", m.accuracy}, {"completeness", m.completeness}});
  }
  return arr;
}

nlohmann::ordered_json timesJson(const StageTimes& t) {
  return {{"depth", t.depth},         {"filter", t.filter}, {"mask", t.mask},  {"allocate", t.allocate},
          {"integrate", t.integrate}, {"prune", t.prune},   {"total", t.total()}};
}

}  // namespace

std::string summaryJson(const RunConfig& cfg, const RunResult& result) {
  nlohmann::ordered_json j;
  j["scale_mode"] = toString(cfg.scaleMode);
  j["depth_source"] = cfg.depthSource == DepthSource::Stereo ? "stereo" : "groundtruth";
  j["cameras"] = cfg.cameras;
  j["filters"] = {{"cost", cfg.filters.bestCost},
                  {"uniqueness", cfg.filters.uniqueness},
                  {"consistency", cfg.filters.consistency}};
  j["masking"] = cfg.masking;
  j["voxel_size"] = cfg.tsdf.voxelSize;
  j["min_block_observations"] = cfg.minBlockObservations;
  j["frames_processed"] = result.frames.size();
  j["warnings"] = result.warnings;
  auto frames = nlohmann::ordered_json::array();
  for (const auto& f : result.frames) {
    nlohmann::ordered_json fj{{"frame_id", f.frameId},
                              {"valid_depth", f.validDepth},
                              {"new_blocks", f.newBlocks},
                              {"active_blocks", f.activeBlocks}};
    if (f.error && !f.error->empty) {
      fj["median_abs_err"] = f.error->medianAbsErr;
      fj["mean_abs_err"] = f.error->meanAbsErr;
      fj["evaluated"] = f.error->validEvaluated;
    }
    frames.push_back(std::move(fj));
  }
  j["frames"] = std::move(frames);
  j["map_points"] = result.map.size();
  j["ungated_map_points"] = result.ungatedMap.size();
  j["total_blocks"] = result.totalBlocks;
  j["quality"] = qualityJson(result.quality);
  j["ungated_quality"] = qualityJson(result.ungatedQuality);
  return j.dump(2) + "\n";
}

std::string timingJson(const RunResult& result) {
  nlohmann::ordered_json j;
  j["wall_seconds"] = result.wallSeconds;
  j["total"] = timesJson(result.totalTimes);
  auto frames = nlohmann::ordered_json::array();
  for (const auto& f : result.frames) {
    auto fj = timesJson(f.times);
    fj["frame_id"] = f.frameId;
    frames.push_back(std::move(fj));
  }
  j["frames"] = std::move(frames);
  return j.dump(2) + "\n";
}

void generateDataset(const GenerateConfig& cfg, const std::filesystem::path& out) {
  cfg.scene.validate();
  cfg.rig.validate(false);
  auto trajectory = scriptTrajectory(cfg.lengthM, cfg.speedMps, cfg.frameRateHz, cfg.trajectory);
  if (cfg.maxFrames > 0 && trajectory.size() > std::size_t(cfg.maxFrames)) {
    trajectory.resize(std::size_t(cfg.maxFrames));
  }
  std::filesystem::create_directories(out);
  saveRig(out / "rig.txt", cfg.rig);
  saveScene(out / "scene.txt", cfg.scene);
  saveTrajectory(out / "trajectory.txt", trajectory);

  std::ostringstream frames;
  frames.precision(17);
  const FisheyeRenderer renderer(cfg.scene, cfg.rig);
  DetectionsByFrame detections;
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    const int frameId = static_cast<int>(k);
    frames << frameId << " " << trajectory[k].timestamp << "\n";
    const FramePacket packet = renderer.render(trajectory[k].bodyToWorld, trajectory[k].timestamp, frameId);
    for (std::size_t c = 0; c < cfg.rig.size(); ++c) {
      const std::string cam = "cam" + std::to_string(c);
      writePgm(out / "images" / cam / frameName(frameId, "pgm"), packet.images[c]);
      writePfm(out / "depth" / cam / frameName(frameId, "pfm"), packet.gtDepth[c]);
    }
    if (!packet.detections.empty()) detections[frameId] = packet.detections;
  }
  writeText(out / "frames.txt", frames.str());
  saveDetections(out / "detections.txt", detections);
}

Scene sceneByName(const std::string& nameOrPath, std::uint64_t seed, double streetLength) {
  if (nameOrPath == "fronto") return scenes::frontoPlane(10);
  if (nameOrPath == "urban") return scenes::urbanStreet(seed, streetLength);
  if (nameOrPath == "moving") return scenes::movingBox(seed, streetLength);
  if (nameOrPath == "far") return scenes::farStructure(seed);
  if (nameOrPath == "noisy") return scenes::noisyFacade(seed);
  return loadScene(nameOrPath);
}

}  // namespace fishmap
