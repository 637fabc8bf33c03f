// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
//   fishmap_acceptance [--work DIR] [--only 1,2,...]

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "fishmap/image_io.hpp"
#include "fishmap/pipeline.hpp"

using namespace fishmap;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string readBytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + std::ptrdiff_t(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

const MapQuality& at(const std::vector<MapQuality>& q, double t) {
  for (const auto& m : q) {
    if (std::abs(m.t1 - t) < 1e-9) return m;
  }
  throw std::runtime_error("tolerance not evaluated");
}

// ---------------------------------------------------------------------------
// shared datasets and runs

struct Work {
  fs::path root;

  // 3 cameras 0.6 m apart: the outer and middle cameras of the default 5-camera rig
  static CameraRig rig() { return makeLinearRig(3, 0.6, 0.5); }

  fs::path dataset(const std::string& name, const std::string& scene, int frames) const {
    const fs::path dir = root / name;
    if (fs::exists(dir / "frames.txt")) return dir;
    GenerateConfig g;
    g.scene = sceneByName(scene, 7, 60);
    g.rig = rig();
    g.lengthM = 30;
    g.speedMps = 3;
    g.frameRateHz = 10;
    g.maxFrames = frames;
    std::cerr << "  generating " << name << " (" << frames << " frames)\n";
    generateDataset(g, dir);
    return dir;
  }

  // map fused from ground-truth depth of every frame, no gate
  fs::path reference(const fs::path& ds, const std::string& name) const {
    const fs::path out = root / name;
    if (fs::exists(out / "map.ply")) return out / "map.ply";
    RunConfig cfg;
    cfg.dataset = ds;
    cfg.output = out;
    cfg.depthSource = DepthSource::GroundTruth;
    cfg.masking = false;
    cfg.minBlockObservations = 0;
    std::cerr << "  fusing reference " << name << "\n";
    runPipeline(cfg);
    return out / "map.ply";
  }
};

// ---------------------------------------------------------------------------

Outcome criterion1(const Work&) {
  const auto t0 = Clock::now();
  double worst = 0;
  // principal point: exact optical axis for any xi
  for (double xi : {0.0, 0.5, 1.0, 1.7}) {
    FisheyeCamerad cam;
    cam.xi = xi;
    const auto ray = backProject(cam, Eigen::Vector2d(cam.cx, cam.cy));
    worst = std::max(worst, (ray - Eigen::Vector3d::UnitZ()).norm());
  }
  // xi = 0 is the pinhole model
  FisheyeCamerad pin;
  pin.xi = 0;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector2d p(pin.cx + 300 * u(rng), pin.cy + 200 * u(rng));
    const Eigen::Vector3d expected =
        Eigen::Vector3d((p.x() - pin.cx) / pin.fx, (p.y() - pin.cy) / pin.fy, 1).normalized();
    worst = std::max(worst, (backProject(pin, p) - expected).norm());
    const Eigen::Vector3d X(u(rng) * 5, u(rng) * 5, 2 + std::abs(u(rng)) * 10);
    const auto q = project(pin, X);
    if (q) {
      const Eigen::Vector2d pinhole(pin.fx * X.x() / X.z() + pin.cx, pin.fy * X.y() / X.z() + pin.cy);
      worst = std::max(worst, (*q - pinhole).norm());
    }
  }
  // running average of clamped samples
  double avgErr = 0;
  std::uniform_real_distribution<double> eta(-0.2, 0.6);
  for (int n = 1; n <= 100; ++n) {
    Voxel v;
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      const double e = eta(rng);
      sum += std::min(1.0, e / 0.2);
      TsdfVolume::updateVoxel(v, e, 0.2, 100);
    }
    avgErr = std::max(avgErr, std::abs(double(v.tsdf) - sum / n));
  }
  const double secs = since(t0);
  return {worst <= 1e-9 && avgErr <= 1e-6 && secs < 1.0,
          fmt("projection error %.1e (<= 1e-9), running-average error %.1e (<= 1e-6), %.3f s", worst, avgErr, secs)};
}

Outcome criterion2(const Work&) {
  const auto t0 = Clock::now();
  const FisheyeCamerad half = FisheyeCamerad{}.scaled(0.5, 512, 272);
  const CameraRig rig = makeLinearRig(5, 0.3, 0.5, half);
  const Posed body(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 1.0));
  const FramePacket frame = renderFrame(scenes::frontoPlane(10, 8, 6), rig, body, 0);
  SweepConfig cfg;
  // 10 m lies on the inverse-depth grid
  cfg.nFronto = 59;
  const PlaneSet planes = generatePlanes(cfg, groundInCamera(rig.rigToCamera[rig.reference] * body.inverse()));
  std::vector<SupportView> support;
  for (std::size_t c = 0; c < rig.size(); ++c) {
    if (c != rig.reference) support.push_back({std::cref(frame.images[c]), rig.cameras[c], rig.referenceToCamera(c)});
  }
  const DepthMap d = sweep(frame.images[rig.reference], half, support, planes, cfg.windowLow, cfg);
  const double secs = since(t0);

  const auto& gt = frame.gtDepth[rig.reference];
  const int m = cfg.windowLow / 2 + 3;
  std::size_t valid = 0, exact = 0;
  for (int r = m; r < gt.rows() - m; ++r) {
    for (int c = m; c < gt.cols() - m; ++c) {
      // unoccluded: the whole window sees the wall
      if (!((gt.block(r - m, c - m, 2 * m + 1, 2 * m + 1) > 0).all())) continue;
      ++valid;
      const auto ray = pixelRay(half, c, r);
      const double expected = 10.0 / ray->z();
      exact += std::abs(d.depth(r, c) - expected) <= 1e-3 * expected;
    }
  }
  const double share = valid ? double(exact) / double(valid) : 0;
  return {valid > 1000 && share >= 0.99 && secs < 30,
          fmt("%zu/%zu wall pixels at the exact depth (%.2f%%, >= 99%%), %.1f s (< 30 s)", exact, valid, 100 * share,
              secs)};
}

Outcome criterion3(const Work&) {
  const CameraRig rig = makeLinearRig(5, 0.3, 0.5);
  const FisheyeRenderer renderer(scenes::farStructure(), rig);
  SweepConfig cfg;
  // planes spent on the scene's depth range
  cfg.zMin = 20;
  cfg.zMax = 60;
  const std::vector<ScaleMode> modes = {ScaleMode::Full, ScaleMode::Multiscale, ScaleMode::Half};
  std::vector<std::vector<double>> errors(modes.size());
  std::vector<double> seconds(modes.size(), 0);
  const FisheyeCamerad& cam = rig.cameras[rig.reference];
  for (int k = 0; k < 4; ++k) {
    const Posed body(Eigen::Matrix3d::Identity(), Eigen::Vector3d(1.5 * k, 0, 1.0));
    const FramePacket f = renderer.render(body, 0.1 * k, k);
    const Posed worldToRef = rig.rigToCamera[rig.reference] * body.inverse();
    const Posed refToWorld = worldToRef.inverse();
    const PlaneSet planes = generatePlanes(cfg, groundInCamera(worldToRef));
    const auto& gt = f.gtDepth[rig.reference];
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const auto t0 = Clock::now();
      const DepthMap d = multiscaleDepth(f.images, rig, planes, cfg, modes[m]);
      seconds[m] += since(t0);
      for (int r = 0; r < gt.rows(); ++r) {
        for (int c = 0; c < gt.cols(); ++c) {
          const float g = gt(r, c);
          if (!(g >= 30 && g <= 50) || !d.valid(r, c)) continue;
          // structure only, not the road surface
          if ((refToWorld * (double(g) * *pixelRay(cam, c, r))).z() < 0.3) continue;
          errors[m].push_back(std::abs(double(d.depth(r, c)) - g));
        }
      }
    }
  }
  const double eFull = median(errors[0]), eMulti = median(errors[1]), eHalf = median(errors[2]);
  const bool accuracyOrder = eFull <= eMulti && eMulti < eHalf;
  const bool timeOrder = seconds[2] < seconds[1] && seconds[1] < seconds[0];
  return {accuracyOrder && timeOrder,
          fmt("median error full %.3f <= multiscale %.3f < half %.3f m; sweep time half %.1f < multiscale %.1f < "
              "full %.1f s",
              eFull, eMulti, eHalf, seconds[2], seconds[1], seconds[0])};
}

Outcome criterion4(const Work&) {
  const CameraRig rig = makeLinearRig(5, 0.3, 0.5);
  const FisheyeRenderer renderer(scenes::noisyFacade(), rig);
  const SweepConfig cfg;
  const FilterConfig fc;
  // raw, +cost, +uniqueness, +consistency
  std::vector<double> sum(4, 0);
  std::vector<std::size_t> count(4, 0);
  for (int k = 0; k < 3; ++k) {
    const Posed body(Eigen::Matrix3d::Identity(), Eigen::Vector3d(1.0 * k, 0, 1.0));
    const FramePacket f = renderer.render(body, 0.1 * k, k);
    const Posed worldToRef = rig.rigToCamera[rig.reference] * body.inverse();
    const DepthMap gt = DepthMap::fromDepth(f.gtDepth[rig.reference]);
    DepthMap d = multiscaleDepth(f.images, rig, generatePlanes(cfg, groundInCamera(worldToRef)), cfg,
                                 ScaleMode::Multiscale);
    const std::array<std::function<DepthMap(const DepthMap&)>, 3> stages = {
        [&](const DepthMap& x) { return bestCostFilter(x, fc); },
        [&](const DepthMap& x) { return uniquenessFilter(x, fc); },
        [&](const DepthMap& x) { return consistencyFilter(x, fc); }};
    for (std::size_t s = 0; s < 4; ++s) {
      if (s > 0) d = stages[s - 1](d);
      const auto st = depthErrorStats(d, gt, k);
      sum[s] += st.meanAbsErr * double(st.validEvaluated);
      count[s] += st.validEvaluated;
    }
  }
  std::vector<double> mean(4);
  for (std::size_t s = 0; s < 4; ++s) mean[s] = count[s] ? sum[s] / double(count[s]) : 0;
  const bool strict = mean[1] < mean[0] && mean[2] < mean[1] && mean[3] < mean[2];
  const double reduction = 1 - mean[3] / mean[0];
  return {strict && reduction >= 0.30,
          fmt("mean error raw %.3f > cost %.3f > uniqueness %.3f > consistency %.3f m; reduction %.1f%% (>= 30%%)",
              mean[0], mean[1], mean[2], mean[3], 100 * reduction)};
}

struct UrbanRun {
  RunResult result;
  fs::path output;
};

UrbanRun urbanRun(const Work& w, const std::string& name, int threads) {
  const fs::path ds = w.dataset("urban100", "urban", 100);
  const fs::path ref = w.reference(ds, "urban100_reference");
  RunConfig cfg;
  cfg.dataset = ds;
  cfg.output = w.root / name;
  cfg.referenceMap = ref;
  cfg.threads = threads;
  std::cerr << "  running pipeline " << name << " (" << threads << " threads)\n";
  return {runPipeline(cfg), cfg.output};
}

std::optional<UrbanRun> firstUrban;

Outcome criterion5(const Work& w) {
  if (!firstUrban) firstUrban = urbanRun(w, "urban100_run_a", 1);
  const auto& r = firstUrban->result;
  const double acc = at(r.quality, 0.10).accuracy;
  const double comp = at(r.quality, 0.25).completeness;
  return {acc >= 0.85 && comp >= 0.80 && r.wallSeconds < 600,
          fmt("accuracy %.3f at 0.10 m (>= 0.85), completeness %.3f at 0.25 m (>= 0.80), %zu frames in %.0f s "
              "(< 600 s)",
              acc, comp, r.frames.size(), r.wallSeconds)};
}

Outcome criterion6(const Work& w) {
  if (!firstUrban) firstUrban = urbanRun(w, "urban100_run_a", 1);
  const auto& r = firstUrban->result;
  const auto& gated = at(r.quality, 0.10);
  const auto& ungated = at(r.ungatedQuality, 0.10);
  return {ungated.completeness > gated.completeness && ungated.accuracy < gated.accuracy,
          fmt("without the observation gate completeness %.4f -> %.4f, accuracy %.4f -> %.4f at 0.10 m",
              gated.completeness, ungated.completeness, gated.accuracy, ungated.accuracy)};
}

// distance from p to an axis-aligned box
double boxDistance(const Eigen::Vector3d& p, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  return (lo - p).cwiseMax(p - hi).cwiseMax(0.0).norm();
}

Outcome criterion7(const Work& w) {
  const int frames = 30;
  const fs::path moving = w.dataset("moving30", "moving", frames);
  const fs::path still = w.dataset("urban30", "urban", frames);
  const fs::path ref = w.reference(still, "urban30_reference");

  auto run = [&](const fs::path& ds, const std::string& name, bool mask) {
    RunConfig cfg;
    cfg.dataset = ds;
    cfg.output = w.root / name;
    cfg.masking = mask;
    cfg.referenceMap = ref;
    std::cerr << "  running pipeline " << name << "\n";
    return runPipeline(cfg);
  };
  const RunResult masked = run(moving, "moving30_masked", true);
  const RunResult unmasked = run(moving, "moving30_unmasked", false);
  const RunResult stat = run(still, "urban30_static", true);

  // region swept by the car over the sequence (constant heading, so the sweep is a box)
  const Dataset ds = Dataset::open(moving);
  const Scene scene = loadScene(moving / "scene.txt");
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(1e9), hi = Eigen::Vector3d::Constant(-1e9);
  for (const auto& prim : scene.primitives) {
    if (!prim.moving()) continue;
    for (double t : {ds.frames.front().timestamp, ds.frames.back().timestamp}) {
      for (const auto& v : prim.worldVertices(t)) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
      }
    }
  }
  auto trailPoints = [&](const PointCloud& map) {
    std::size_t n = 0;
    for (const auto& p : map.points) n += boxDistance(p.cast<double>(), lo, hi) <= 0.2;
    return n;
  };
  const std::size_t inMasked = trailPoints(masked.map), inUnmasked = trailPoints(unmasked.map);
  const double accMasked = at(masked.quality, 0.10).accuracy, accStatic = at(stat.quality, 0.10).accuracy;
  return {inMasked == 0 && inUnmasked > 100 && accStatic - accMasked < 0.01,
          fmt("points near the car's trail: masked %zu (== 0), unmasked %zu (> 100); accuracy at 0.10 m masked %.4f "
              "vs no moving object %.4f (drop < 0.01)",
              inMasked, inUnmasked, accMasked, accStatic)};
}

int floorDiv(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

Outcome criterion8(const Work&) {
  std::mt19937_64 rng(8);
  // accuracy / completeness against brute force
  int metricMatches = 0;
  for (int inst = 0; inst < 20; ++inst) {
    std::uniform_real_distribution<float> u(0, float(1 + inst % 4));
    PointCloud a, b;
    for (int i = 0; i < 1000; ++i) a.points.emplace_back(u(rng), u(rng), u(rng));
    for (int i = 0; i < 1000; ++i) b.points.emplace_back(u(rng), u(rng), u(rng));
    const double t1 = 0.03 + 0.01 * inst, t2 = 0.05 + 0.01 * inst;
    auto brute = [](const PointCloud& from, const PointCloud& to, double t) {
      std::size_t n = 0;
      for (const auto& p : from.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to.points) best = std::min(best, (p.cast<double>() - q.cast<double>()).norm());
        n += best <= t;
      }
      return double(n) / double(from.size());
    };
    const MapQuality q = accuracyCompleteness(a, b, t1, t2);
    metricMatches += q.accuracy == brute(a, b, t1) && q.completeness == brute(b, a, t2);
  }

  // allocation against a dense sampling of the truncation segment
  const FisheyeCamerad cam = FisheyeCamerad{}.scaled(0.25, 256, 136);
  const TsdfConfig tc;
  std::uniform_int_distribution<int> col(0, cam.width - 1), row(0, cam.height - 1);
  std::uniform_real_distribution<double> range(1, 25), yaw(-3.1, 3.1), pos(-20, 20);
  Eigen::Matrix3d camInBody;
  camInBody << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  int allocMatches = 0, cases = 0;
  while (cases < 50) {
    const int c = col(rng), r = row(rng);
    const auto ray = pixelRay(cam, c, r);
    if (!ray) continue;
    const Eigen::Vector3d position(pos(rng), pos(rng), 1.5);
    const Posed camToWorld(Eigen::AngleAxisd(yaw(rng), Eigen::Vector3d::UnitZ()).toRotationMatrix() * camInBody,
                           position);
    DepthMap d(cam.width, cam.height);
    d.depth(r, c) = float(range(rng));
    TsdfVolume vol(tc, position);
    const auto created = vol.allocate(d, cam, camToWorld.inverse());
    std::set<std::array<int, 3>> got, oracle;
    for (const auto& b : created) got.insert({b.x(), b.y(), b.z()});
    const Eigen::Vector3d dir = camToWorld.rotation() * *ray;
    const int steps = 100000;
    for (int s = 0; s <= steps; ++s) {
      const double t = d.depth(r, c) - tc.mu + 2 * tc.mu * double(s) / steps;
      const Eigen::Vector3i v = ((position + t * dir) / tc.voxelSize).array().floor().cast<int>();
      const Eigen::Vector3i b(floorDiv(v.x(), kBlockSide), floorDiv(v.y(), kBlockSide), floorDiv(v.z(), kBlockSide));
      if (vol.insideLocalBox(vol.blockCenter(b))) oracle.insert({b.x(), b.y(), b.z()});
    }
    allocMatches += got == oracle;
    ++cases;
  }
  return {metricMatches == 20 && allocMatches == 50,
          fmt("metric instances matching brute force %d/20; allocation cases matching the dense oracle %d/50",
              metricMatches, allocMatches)};
}

Outcome criterion9(const Work& w) {
  if (!firstUrban) firstUrban = urbanRun(w, "urban100_run_a", 1);
  const UrbanRun second = urbanRun(w, "urban100_run_b", 3);
  bool same = true;
  std::string detail;
  for (const char* f : {"map.ply", "metrics.csv", "summary.json"}) {
    const bool eq = readBytes(firstUrban->output / f) == readBytes(second.output / f);
    same = same && eq;
    detail += std::string(detail.empty() ? "" : ", ") + f + (eq ? " identical" : " DIFFERS");
  }
  return {same, "1 vs 3 threads: " + detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fishmap acceptance checks"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "directory for generated datasets and runs");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  Work w{fs::absolute(work)};
  fs::create_directories(w.root);
  const std::vector<std::function<Outcome(const Work&)>> criteria = {
      criterion1, criterion2, criterion3, criterion4, criterion5, criterion6, criterion7, criterion8, criterion9};

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i](w);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
