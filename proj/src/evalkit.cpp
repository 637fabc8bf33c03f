#include "fishmap/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fishmap {

DepthErrorStats depthErrorStats(const DepthMap& est, const DepthMap& gt, int frameId) {
  if (est.width() != gt.width() || est.height() != gt.height()) {
    throw std::invalid_argument("depthErrorStats: dimension mismatch");
  }
  std::vector<double> errs;
  for (int r = 0; r < est.height(); ++r) {
    for (int c = 0; c < est.width(); ++c) {
      if (est.valid(r, c) && gt.valid(r, c)) errs.push_back(std::abs(double(est.depth(r, c)) - gt.depth(r, c)));
    }
  }
  DepthErrorStats s;
  s.frameId = frameId;
  s.validEvaluated = errs.size();
  if (errs.empty()) return s;
  s.empty = false;
  double sum = 0;
  for (double e : errs) sum += e;
  s.meanAbsErr = sum / double(errs.size());
  const std::size_t mid = errs.size() / 2;
  std::nth_element(errs.begin(), errs.begin() + std::ptrdiff_t(mid), errs.end());
  if (errs.size() % 2 == 1) {
    s.medianAbsErr = errs[mid];
  } else {
    const double hi = errs[mid];
    const double lo = *std::max_element(errs.begin(), errs.begin() + std::ptrdiff_t(mid));
    s.medianAbsErr = 0.5 * (lo + hi);
  }
  return s;
}

NearestNeighborGrid::NearestNeighborGrid(const std::vector<Eigen::Vector3f>& points, double maxRadius)
    : points_(points), radius_(maxRadius), cell_(maxRadius) {
  if (!(maxRadius > 0)) throw std::invalid_argument("NearestNeighborGrid: radius must be positive");
  if (points.empty()) return;
  Eigen::Vector3i lo = Eigen::Vector3i::Constant(std::numeric_limits<int>::max());
  Eigen::Vector3i hi = Eigen::Vector3i::Constant(std::numeric_limits<int>::min());
  std::vector<Eigen::Vector3i> cells(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    cells[i] = (points[i].cast<double>() / cell_).array().floor().cast<int>();
    lo = lo.cwiseMin(cells[i]);
    hi = hi.cwiseMax(cells[i]);
  }
  origin_ = lo;
  dims_ = hi - lo + Eigen::Vector3i::Ones();
  const std::size_t nCells = std::size_t(dims_.x()) * std::size_t(dims_.y()) * std::size_t(dims_.z());
  if (nCells > 64 * points.size() + 1024) {
    // sparse cloud over a huge extent: coarsen so the table stays bounded
    const double scale = std::cbrt(double(nCells) / double(64 * points.size() + 1024));
    cell_ *= std::ceil(scale);
    for (std::size_t i = 0; i < points.size(); ++i) {
      cells[i] = (points[i].cast<double>() / cell_).array().floor().cast<int>();
    }
    lo = Eigen::Vector3i::Constant(std::numeric_limits<int>::max());
    hi = Eigen::Vector3i::Constant(std::numeric_limits<int>::min());
    for (const auto& c : cells) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
    origin_ = lo;
    dims_ = hi - lo + Eigen::Vector3i::Ones();
  }
  const std::size_t total = std::size_t(dims_.x()) * std::size_t(dims_.y()) * std::size_t(dims_.z());
  start_.assign(total + 1, 0);
  std::vector<std::uint32_t> cellOf(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    cellOf[i] = static_cast<std::uint32_t>(key(cells[i]));
    ++start_[cellOf[i] + 1];
  }
  for (std::size_t i = 1; i < start_.size(); ++i) start_[i] += start_[i - 1];
  order_.resize(points.size());
  std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
  for (std::size_t i = 0; i < points.size(); ++i) order_[fill[cellOf[i]]++] = static_cast<std::uint32_t>(i);
}

std::int64_t NearestNeighborGrid::key(const Eigen::Vector3i& cell) const {
  const Eigen::Vector3i l = cell - origin_;
  return (std::int64_t(l.z()) * dims_.y() + l.y()) * dims_.x() + l.x();
}

double NearestNeighborGrid::distance(const Eigen::Vector3f& query) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (points_.empty()) return inf;
  const Eigen::Vector3d q = query.cast<double>();
  const Eigen::Vector3i lo = ((q.array() - radius_) / cell_).floor().cast<int>().max(origin_.array());
  const Eigen::Vector3i hi =
      ((q.array() + radius_) / cell_).floor().cast<int>().min((origin_ + dims_ - Eigen::Vector3i::Ones()).array());
  double best2 = inf;
  for (int z = lo.z(); z <= hi.z(); ++z) {
    for (int y = lo.y(); y <= hi.y(); ++y) {
      for (int x = lo.x(); x <= hi.x(); ++x) {
        const std::int64_t k = key({x, y, z});
        for (std::uint32_t n = start_[std::size_t(k)]; n < start_[std::size_t(k) + 1]; ++n) {
          const double d2 = (points_[order_[n]].cast<double>() - q).squaredNorm();
          best2 = std::min(best2, d2);
        }
      }
    }
  }
  const double d = std::sqrt(best2);
  return d <= radius_ ? d : inf;
}

std::vector<double> nearestDistances(const std::vector<Eigen::Vector3f>& queries,
                                     const std::vector<Eigen::Vector3f>& reference, double maxRadius) {
  const NearestNeighborGrid grid(reference, maxRadius);
  std::vector<double> out(queries.size());
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[std::size_t(i)] = grid.distance(queries[std::size_t(i)]);
  return out;
}

namespace {

double shareWithin(const std::vector<double>& d, double t) {
  std::size_t n = 0;
  for (double v : d) n += v <= t;
  return double(n) / double(d.size());
}

}  // namespace

std::vector<MapQuality> toleranceSweep(const PointCloud& sc, const PointCloud& sgt,
                                       const std::vector<double>& tolerances) {
  if (sgt.empty()) throw std::invalid_argument("accuracyCompleteness: ground-truth cloud is empty");
  if (tolerances.empty()) return {};
  const double tmax = *std::max_element(tolerances.begin(), tolerances.end());
  if (!(tmax > 0)) throw std::invalid_argument("accuracyCompleteness: tolerances must be positive");
  const auto toGt = nearestDistances(sc.points, sgt.points, tmax);
  const auto toSc = nearestDistances(sgt.points, sc.points, tmax);
  std::vector<MapQuality> out;
  for (double t : tolerances) {
    MapQuality q;
    q.t1 = q.t2 = t;
    q.accuracy = sc.empty() ? 1.0 : shareWithin(toGt, t);
    q.completeness = shareWithin(toSc, t);
    out.push_back(q);
  }
  return out;
}

MapQuality accuracyCompleteness(const PointCloud& sc, const PointCloud& sgt, double t1, double t2) {
  if (sgt.empty()) throw std::invalid_argument("accuracyCompleteness: ground-truth cloud is empty");
  if (!(t1 > 0) || !(t2 > 0)) throw std::invalid_argument("accuracyCompleteness: tolerances must be positive");
  MapQuality q;
  q.t1 = t1;
  q.t2 = t2;
  q.accuracy = sc.empty() ? 1.0 : shareWithin(nearestDistances(sc.points, sgt.points, t1), t1);
  q.completeness = shareWithin(nearestDistances(sgt.points, sc.points, t2), t2);
  return q;
}

DepthMap projectGtDepth(const PointCloud& cloud, const FisheyeCamerad& cam, const Posed& worldToCam) {
  DepthMap out(cam.width, cam.height);
  out.bestCost.setZero();
  for (const auto& p : cloud.points) {
    const Eigen::Vector3d x = worldToCam * p.cast<double>();
    const auto px = project(cam, x);
    if (!px) continue;
    const int c = static_cast<int>(std::floor(px->x())), r = static_cast<int>(std::floor(px->y()));
    const float range = static_cast<float>(x.norm());
    float& d = out.depth(r, c);
    if (d == 0 || range < d) d = range;
  }
  return out;
}

void writeMetricsCsv(const std::filesystem::path& path, const std::vector<DepthErrorStats>& stats) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "frame_id,median,mean,n\n";
  char buf[128];
  for (const auto& s : stats) {
    if (s.empty) {
      std::snprintf(buf, sizeof buf, "%d,nan,nan,0\n", s.frameId);
    } else {
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%zu\n", s.frameId, s.medianAbsErr, s.meanAbsErr, s.validEvaluated);
    }
    out << buf;
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::vector<DepthErrorStats> readMetricsCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::string line;
  std::getline(in, line);
  std::vector<DepthErrorStats> out;
  int lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    DepthErrorStats s;
    std::string med, mean;
    if (!(ss >> s.frameId >> med >> mean >> s.validEvaluated)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineNo) + ": malformed metrics row");
    }
    s.empty = s.validEvaluated == 0;
    if (!s.empty) {
      s.medianAbsErr = std::stod(med);
      s.meanAbsErr = std::stod(mean);
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace fishmap
