#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "fishmap/evalkit.hpp"
#include "fishmap/synthworld.hpp"

using namespace fishmap;

namespace {

PointCloud randomCloud(std::mt19937_64& rng, std::size_t n, double extent) {
  std::uniform_real_distribution<float> u(0, float(extent));
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

// O(n^2) oracle
std::size_t bruteWithin(const PointCloud& from, const PointCloud& to, double t) {
  std::size_t n = 0;
  for (const auto& p : from.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to.points) best = std::min(best, (p.cast<double>() - q.cast<double>()).norm());
    n += best <= t;
  }
  return n;
}

DepthMap mapOf(const Raster<float>& depth) { return DepthMap::fromDepth(depth); }

}  // namespace

TEST(DepthError, Examples) {
  Raster<float> gt(20, 30);
  gt.setConstant(8);
  gt(3, 3) = 0;
  const auto same = depthErrorStats(mapOf(gt), mapOf(gt), 7);
  EXPECT_FALSE(same.empty);
  EXPECT_EQ(same.frameId, 7);
  EXPECT_EQ(same.medianAbsErr, 0);
  EXPECT_EQ(same.meanAbsErr, 0);
  EXPECT_EQ(same.validEvaluated, 599u);

  Raster<float> shifted = gt;
  shifted = (gt > 0).select(gt + 0.3f, 0.f);
  const auto s = depthErrorStats(mapOf(shifted), mapOf(gt));
  EXPECT_NEAR(s.medianAbsErr, 0.3, 1e-6);
  EXPECT_NEAR(s.meanAbsErr, 0.3, 1e-6);

  const auto none = depthErrorStats(DepthMap(30, 20), mapOf(gt));
  EXPECT_TRUE(none.empty);
  EXPECT_EQ(none.validEvaluated, 0u);

  EXPECT_THROW(depthErrorStats(DepthMap(10, 10), mapOf(gt)), std::invalid_argument);
}

TEST(DepthError, OnlyJointlyValidPixels) {
  Raster<float> gt(1, 4), est(1, 4);
  gt << 1, 2, 0, 4;
  est << 1.5f, 0, 9, 5;
  const auto s = depthErrorStats(mapOf(est), mapOf(gt));
  EXPECT_EQ(s.validEvaluated, 2u);
  EXPECT_NEAR(s.meanAbsErr, 0.75, 1e-6);
  EXPECT_NEAR(s.medianAbsErr, 0.75, 1e-6);
}

TEST(MapQuality, IdentityAndShift) {
  PointCloud grid;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) grid.points.emplace_back(float(i), float(j), 0.f);
  }
  for (double t : {1e-6, 0.05, 1.0}) {
    const auto q = accuracyCompleteness(grid, grid, t, t);
    EXPECT_EQ(q.accuracy, 1);
    EXPECT_EQ(q.completeness, 1);
  }
  PointCloud moved = grid;
  for (auto& p : moved.points) p.z() += 0.2f;
  const auto q = accuracyCompleteness(moved, grid, 0.1, 0.1);
  EXPECT_EQ(q.accuracy, 0);
  EXPECT_EQ(q.completeness, 0);
}

TEST(MapQuality, EmptyInputs) {
  std::mt19937_64 rng(1);
  const PointCloud gt = randomCloud(rng, 50, 2);
  const auto q = accuracyCompleteness(PointCloud{}, gt, 0.1, 0.1);
  EXPECT_EQ(q.accuracy, 1);
  EXPECT_EQ(q.completeness, 0);
  EXPECT_THROW(accuracyCompleteness(gt, PointCloud{}, 0.1, 0.1), std::invalid_argument);
}

TEST(MapQuality, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2);
  for (int instance = 0; instance < 20; ++instance) {
    const double extent = 1 + instance % 5;
    const PointCloud sc = randomCloud(rng, 1000, extent);
    const PointCloud sgt = randomCloud(rng, 1000, extent);
    const double t1 = 0.02 + 0.01 * instance, t2 = 0.25;
    const auto q = accuracyCompleteness(sc, sgt, t1, t2);
    EXPECT_EQ(q.accuracy, double(bruteWithin(sc, sgt, t1)) / 1000.0) << instance;
    EXPECT_EQ(q.completeness, double(bruteWithin(sgt, sc, t2)) / 1000.0) << instance;
  }
}

TEST(MapQuality, NearestDistancesAreExact) {
  std::mt19937_64 rng(3);
  const PointCloud a = randomCloud(rng, 500, 3), b = randomCloud(rng, 700, 3);
  const auto d = nearestDistances(a.points, b.points, 0.3);
  ASSERT_EQ(d.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b.points) best = std::min(best, (a.points[i].cast<double>() - q.cast<double>()).norm());
    if (best <= 0.3) {
      EXPECT_NEAR(d[i], best, 1e-6);
    } else {
      EXPECT_TRUE(std::isinf(d[i]));
    }
  }
}

TEST(MapQuality, MonotoneAndSymmetric) {
  std::mt19937_64 rng(4);
  const PointCloud sc = randomCloud(rng, 800, 2), sgt = randomCloud(rng, 600, 2);
  const std::vector<double> ts = {0.01, 0.03, 0.05, 0.08, 0.12, 0.2};
  const auto sweep = toleranceSweep(sc, sgt, ts);
  ASSERT_EQ(sweep.size(), ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const auto single = accuracyCompleteness(sc, sgt, ts[k], ts[k]);
    EXPECT_EQ(sweep[k].accuracy, single.accuracy);
    EXPECT_EQ(sweep[k].completeness, single.completeness);
    EXPECT_EQ(single.completeness, accuracyCompleteness(sgt, sc, ts[k], ts[k]).accuracy);
    EXPECT_GE(single.accuracy, 0);
    EXPECT_LE(single.completeness, 1);
    if (k > 0) {
      EXPECT_GE(sweep[k].accuracy, sweep[k - 1].accuracy);
      EXPECT_GE(sweep[k].completeness, sweep[k - 1].completeness);
    }
  }
}

TEST(ProjectGt, Examples) {
  FisheyeCamerad cam;
  cam.cx = 512.5;
  cam.cy = 272.5;
  const Posed identity;
  PointCloud one;
  one.points.emplace_back(0.f, 0.f, 5.f);
  const DepthMap d = projectGtDepth(one, cam, identity);
  EXPECT_FLOAT_EQ(d.depth(272, 512), 5.f);
  EXPECT_EQ(d.validCount(), 1u);

  PointCloud two;
  const Eigen::Vector3f dir = Eigen::Vector3f(0.3f, -0.2f, 1.f).normalized();
  two.points.push_back(8.f * dir);
  two.points.push_back(5.f * dir);
  two.points.push_back(11.f * dir);
  const DepthMap z = projectGtDepth(two, cam, identity);
  ASSERT_EQ(z.validCount(), 1u);
  EXPECT_NEAR(z.depth.maxCoeff(), 5.f, 1e-5);

  PointCloud behind;
  behind.points.emplace_back(0.f, 0.f, -5.f);
  EXPECT_EQ(projectGtDepth(behind, FisheyeCamerad{}.scaled(1, 1024, 544), identity).validCount(), 0u);
}

TEST(ProjectGt, MatchesRendererDepth) {
  const CameraRig rig = makeLinearRig(1);
  const Posed body(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0.4, 1.0));
  const FramePacket f = renderFrame(scenes::frontoPlane(10, 8, 6), rig, body, 0);
  const Posed worldToCam = rig.rigToCamera[0] * body.inverse();
  const Posed camToWorld = worldToCam.inverse();
  const FisheyeCamerad& cam = rig.cameras[0];
  // a dense sampling of the wall taken from the renderer's own rays
  PointCloud cloud;
  for (int r = 0; r < cam.height; ++r) {
    for (int c = 0; c < cam.width; ++c) {
      const float d = f.gtDepth[0](r, c);
      if (d > 0) cloud.points.push_back((camToWorld * (double(d) * *pixelRay(cam, c, r))).cast<float>());
    }
  }
  const DepthMap p = projectGtDepth(cloud, cam, worldToCam);
  std::size_t covered = 0, close = 0;
  for (int r = 0; r < cam.height; ++r) {
    for (int c = 0; c < cam.width; ++c) {
      if (f.gtDepth[0](r, c) <= 0) continue;
      ++covered;
      close += p.valid(r, c) && std::abs(p.depth(r, c) - f.gtDepth[0](r, c)) <= 1e-3f;
    }
  }
  ASSERT_GT(covered, 10000u);
  EXPECT_GE(double(close) / double(covered), 0.99);
}

TEST(MetricsCsv, RoundTrip) {
  std::vector<DepthErrorStats> in(3);
  in[0] = {0, 0.125, 0.25, 1000, false};
  in[1] = {1, 0, 0, 0, true};
  in[2] = {2, 1.5, 2.75, 42, false};
  const auto path = std::filesystem::temp_directory_path() / "fishmap_metrics.csv";
  writeMetricsCsv(path, in);
  const auto out = readMetricsCsv(path);
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out[i].frameId, in[i].frameId);
    EXPECT_EQ(out[i].validEvaluated, in[i].validEvaluated);
    EXPECT_EQ(out[i].empty, in[i].empty);
    if (!in[i].empty) {
      EXPECT_DOUBLE_EQ(out[i].medianAbsErr, in[i].medianAbsErr);
      EXPECT_DOUBLE_EQ(out[i].meanAbsErr, in[i].meanAbsErr);
    }
  }
  std::filesystem::remove(path);
}
