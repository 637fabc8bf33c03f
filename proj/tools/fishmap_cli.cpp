// fishmap command-line front end: generate, run, eval, depth.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fishmap/config.hpp"
#include "fishmap/evalkit.hpp"
#include "fishmap/image_io.hpp"
#include "fishmap/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fishmap;

namespace {

struct GenerateArgs {
  std::string scene = "urban";
  std::uint64_t seed = 7;
  double length = 30;
  double streetLength = 60;
  double speed = 3;
  double fps = 10;
  int frames = 0;
  std::string rig;
  int cameraCount = 5;
  double spacing = 0.3;
  double resolutionScale = 1;
  double curvature = 0;
  double noise = -1;
  std::string out;
};

int runGenerate(const GenerateArgs& a) {
  GenerateConfig g;
  g.scene = sceneByName(a.scene, a.seed, a.streetLength);
  if (a.noise >= 0) g.scene.noiseSigma = a.noise;
  if (!a.rig.empty()) {
    g.rig = loadRig(a.rig);
  } else {
    FisheyeCamerad cam;
    if (a.resolutionScale != 1) {
      cam = cam.scaled(a.resolutionScale, int(std::lround(cam.width * a.resolutionScale)),
                       int(std::lround(cam.height * a.resolutionScale)));
    }
    g.rig = makeLinearRig(a.cameraCount, a.spacing, 0.5, cam);
  }
  g.lengthM = a.length;
  g.speedMps = a.speed;
  g.frameRateHz = a.fps;
  g.maxFrames = a.frames;
  g.trajectory.curvature = a.curvature;
  generateDataset(g, a.out);
  std::cout << "dataset written to " << a.out << "\n";
  return 0;
}

void printQuality(const std::vector<MapQuality>& q, const char* label) {
  for (const auto& m : q) {
    std::printf("%s t=%.2f accuracy=%.4f completeness=%.4f\n", label, m.t1, m.accuracy, m.completeness);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fisheye multi-view depth estimation and TSDF mapping"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* genCmd = app.add_subcommand("generate", "render a synthetic dataset");
  genCmd->add_option("--scene", gen.scene, "preset (fronto, urban, moving, far, noisy) or scene file");
  genCmd->add_option("--seed", gen.seed, "scene seed");
  genCmd->add_option("--length", gen.length, "trajectory length in meters");
  genCmd->add_option("--street-length", gen.streetLength, "street length for street presets");
  genCmd->add_option("--speed", gen.speed, "vehicle speed, m/s");
  genCmd->add_option("--fps", gen.fps, "frame rate, Hz");
  genCmd->add_option("--frames", gen.frames, "cap on the number of frames (0 = all)");
  genCmd->add_option("--rig", gen.rig, "rig file (default: linear rig)");
  genCmd->add_option("--cameras", gen.cameraCount, "linear rig camera count");
  genCmd->add_option("--spacing", gen.spacing, "linear rig baseline between neighbors, m");
  genCmd->add_option("--resolution-scale", gen.resolutionScale, "scale of the default 1024x544 camera");
  genCmd->add_option("--curvature", gen.curvature, "heading change per meter, 1/m");
  genCmd->add_option("--noise", gen.noise, "override intensity noise sigma");
  genCmd->add_option("--out", gen.out, "output directory")->required();

  std::string configPath;
  std::vector<std::string> overrides;
  std::string runDataset, runOut, runRig, runMode, runSource, runReference, runCameras;
  int runThreads = -1, runFrames = -1, runPlyEvery = -1, runMinObs = -1;
  bool noCost = false, noUnique = false, noConsist = false, noFilters = false, noMask = false;
  bool pipelined = false, writeDepth = false;
  auto* runCmd = app.add_subcommand("run", "run the mapping pipeline over a dataset");
  runCmd->add_option("--config", configPath, "key = value settings file");
  runCmd->add_option("--dataset", runDataset, "dataset directory");
  runCmd->add_option("--out", runOut, "output directory");
  runCmd->add_option("--rig", runRig, "rig file (default: dataset/rig.txt)");
  runCmd->add_option("--cameras", runCameras, "comma-separated camera indices");
  runCmd->add_option("--mode", runMode, "full, half or multiscale");
  runCmd->add_option("--depth-source", runSource, "stereo or groundtruth");
  runCmd->add_option("--threads", runThreads, "worker threads (0 = default)");
  runCmd->add_option("--frames", runFrames, "process at most this many frames");
  runCmd->add_option("--ply-every", runPlyEvery, "write an intermediate map every N frames");
  runCmd->add_option("--min-observations", runMinObs, "block observation gate for extraction");
  runCmd->add_option("--reference", runReference, "ground-truth map (PLY) for accuracy/completeness");
  runCmd->add_flag("--no-cost-filter", noCost);
  runCmd->add_flag("--no-uniqueness-filter", noUnique);
  runCmd->add_flag("--no-consistency-filter", noConsist);
  runCmd->add_flag("--no-filters", noFilters);
  runCmd->add_flag("--no-mask", noMask);
  runCmd->add_flag("--pipelined", pipelined, "overlap depth estimation with fusion");
  runCmd->add_flag("--write-depth", writeDepth, "write per-frame depth maps");
  runCmd->add_option("--set", overrides, "extra key=value override (repeatable)");

  std::string evalMap, evalReference, evalEst, evalGt;
  std::vector<double> evalTolerances = kDefaultTolerances;
  auto* evalCmd = app.add_subcommand("eval", "score a map or a depth map against ground truth");
  evalCmd->add_option("--map", evalMap, "reconstructed map (PLY)");
  evalCmd->add_option("--reference", evalReference, "ground-truth map (PLY)");
  evalCmd->add_option("--tolerances", evalTolerances, "tolerances in meters")->delimiter(',');
  evalCmd->add_option("--depth", evalEst, "estimated depth map (PFM)");
  evalCmd->add_option("--gt", evalGt, "ground-truth depth map (PFM)");

  std::string depthDataset, depthOut, depthMode = "multiscale", depthCameras;
  int depthFrame = 0;
  bool depthFilters = false;
  auto* depthCmd = app.add_subcommand("depth", "estimate one reference depth map");
  depthCmd->add_option("--dataset", depthDataset, "dataset directory")->required();
  depthCmd->add_option("--frame", depthFrame, "frame id");
  depthCmd->add_option("--mode", depthMode, "full, half or multiscale");
  depthCmd->add_option("--cameras", depthCameras, "comma-separated camera indices");
  depthCmd->add_flag("--filters", depthFilters, "apply the depth filters");
  depthCmd->add_option("--out", depthOut, "output PFM");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*genCmd) return runGenerate(gen);

    if (*runCmd) {
      KeyValueConfig kv = configPath.empty() ? KeyValueConfig{} : KeyValueConfig::load(configPath);
      auto set = [&kv](const char* key, const std::string& v) {
        if (!v.empty()) kv.set(key, v);
      };
      set("dataset", runDataset);
      set("output", runOut);
      set("rig", runRig);
      set("cameras", runCameras);
      set("scale_mode", runMode);
      set("depth_source", runSource);
      set("reference_map", runReference);
      if (runThreads >= 0) kv.set("threads", std::to_string(runThreads));
      if (runFrames >= 0) kv.set("max_frames", std::to_string(runFrames));
      if (runPlyEvery >= 0) kv.set("ply_every", std::to_string(runPlyEvery));
      if (runMinObs >= 0) kv.set("min_block_observations", std::to_string(runMinObs));
      if (noCost || noFilters) kv.set("filter_cost", "false");
      if (noUnique || noFilters) kv.set("filter_uniqueness", "false");
      if (noConsist || noFilters) kv.set("filter_consistency", "false");
      if (noMask) kv.set("masking", "false");
      if (pipelined) kv.set("pipelined", "true");
      if (writeDepth) kv.set("write_depth", "true");
      for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + o + "'");
        kv.set(o.substr(0, eq), o.substr(eq + 1));
      }
      RunConfig cfg;
      cfg.apply(kv);
      const RunResult r = runPipeline(cfg);
      std::printf("frames=%zu points=%zu blocks=%zu wall=%.2fs\n", r.frames.size(), r.map.size(), r.totalBlocks,
                  r.wallSeconds);
      printQuality(r.quality, "gated");
      printQuality(r.ungatedQuality, "ungated");
      for (const auto& w : r.warnings) std::printf("warning: %s\n", w.c_str());
      return 0;
    }

    if (*evalCmd) {
      bool did = false;
      if (!evalMap.empty() || !evalReference.empty()) {
        if (evalMap.empty() || evalReference.empty()) throw std::invalid_argument("eval needs both --map and --reference");
        printQuality(toleranceSweep(readPly(evalMap), readPly(evalReference), evalTolerances), "map");
        did = true;
      }
      if (!evalEst.empty() || !evalGt.empty()) {
        if (evalEst.empty() || evalGt.empty()) throw std::invalid_argument("eval needs both --depth and --gt");
        const auto s = depthErrorStats(DepthMap::fromDepth(readPfm(evalEst)), DepthMap::fromDepth(readPfm(evalGt)));
        std::printf("median=%.6f mean=%.6f n=%zu\n", s.medianAbsErr, s.meanAbsErr, s.validEvaluated);
        did = true;
      }
      if (!did) throw std::invalid_argument("eval: nothing to evaluate");
      return 0;
    }

    if (*depthCmd) {
      const Dataset ds = Dataset::open(depthDataset);
      std::vector<std::size_t> idx;
      CameraRig rig = ds.rig;
      if (!depthCameras.empty()) {
        KeyValueConfig kv;
        kv.set("cameras", depthCameras);
        for (int c : kv.getIntList("cameras", {})) idx.push_back(std::size_t(c));
        rig = ds.rig.subset(idx);
      } else {
        for (std::size_t i = 0; i < rig.size(); ++i) idx.push_back(i);
      }
      const FrameRef* frame = nullptr;
      for (const auto& f : ds.frames) {
        if (f.frameId == depthFrame) frame = &f;
      }
      if (!frame) throw std::invalid_argument("frame " + std::to_string(depthFrame) + " not in dataset");
      const auto pose = ds.poseAt(frame->timestamp);
      if (!pose) throw std::runtime_error("no pose for frame " + std::to_string(depthFrame));
      std::vector<Image> images;
      for (std::size_t c : idx) images.push_back(readPgm(ds.imagePath(c, depthFrame)));
      const Posed worldToRef = rig.rigToCamera[rig.reference] * pose->inverse();
      SweepConfig sc;
      DepthMap d = multiscaleDepth(images, rig, generatePlanes(sc, groundInCamera(worldToRef)), sc,
                                   parseScaleMode(depthMode));
      if (depthFilters) d = applyFilters(d, FilterConfig{});
      const auto gtPath = ds.depthPath(idx[rig.reference], depthFrame);
      if (fs::exists(gtPath)) {
        const auto s = depthErrorStats(d, DepthMap::fromDepth(readPfm(gtPath)), depthFrame);
        std::printf("median=%.6f mean=%.6f n=%zu\n", s.medianAbsErr, s.meanAbsErr, s.validEvaluated);
      }
      if (!depthOut.empty()) writePfm(depthOut, d.depth);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
