#include "fishmap/planesweep.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace fishmap {
namespace {

constexpr float kNone = std::numeric_limits<float>::quiet_NaN();
// Costs are averaged in fixed point so the sum is independent of view order.
constexpr double kFixedScale = 1099511627776.0;  // 2^40
constexpr double kVarianceFloor = 1e-8;
constexpr int kRowBlock = 16;

struct Candidate {
  double cost = std::numeric_limits<double>::infinity();
  int plane = -1;
};
using TopCandidates = std::array<Candidate, 4>;

void insertCandidate(TopCandidates& top, double cost, int plane) {
  if (!(cost < top[3].cost)) return;
  int i = 3;
  while (i > 0 && cost < top[i - 1].cost) {
    top[i] = top[i - 1];
    --i;
  }
  top[i] = {cost, plane};
}

// Window sums of one or more channels over a width x height raster, computed
// separably: sliding along each row, then per block of rows down the columns.
// Only pixels whose window lies inside the raster are written.
struct BoxSums {
  int width = 0, height = 0, half = 0;
  std::vector<double> rowW, rowWW, rowRW;
  std::vector<std::int32_t> rowCount;

  void resize(int w, int h, int hf) {
    width = w;
    height = h;
    half = hf;
    const auto n = static_cast<std::size_t>(w) * h;
    rowW.assign(n, 0);
    rowWW.assign(n, 0);
    rowRW.assign(n, 0);
    rowCount.assign(n, 0);
  }
};

// Precomputed reference statistics for a window size.
struct ReferenceStats {
  std::vector<double> mean;     // per pixel window mean
  std::vector<double> var;      // per pixel window variance (population)
  std::vector<std::uint8_t> ok; // window inside the image and textured
};

ReferenceStats referenceStats(const Image& ref, int window) {
  const int W = static_cast<int>(ref.cols()), H = static_cast<int>(ref.rows());
  const int half = window / 2;
  const double n = double(window) * window;
  ReferenceStats st;
  const auto N = static_cast<std::size_t>(W) * H;
  st.mean.assign(N, 0);
  st.var.assign(N, 0);
  st.ok.assign(N, 0);
  std::vector<double> rs(N, 0), rss(N, 0);
#pragma omp parallel for
  for (int y = 0; y < H; ++y) {
    if (W < window) continue;
    double s = 0, ss = 0;
    for (int x = 0; x < window; ++x) {
      const double v = ref(y, x);
      s += v;
      ss += v * v;
    }
    for (int x = half;; ++x) {
      rs[std::size_t(y) * W + x] = s;
      rss[std::size_t(y) * W + x] = ss;
      if (x + half + 1 >= W) break;
      const double a = ref(y, x + half + 1), b = ref(y, x - half);
      s += a - b;
      ss += a * a - b * b;
    }
  }
#pragma omp parallel for
  for (int y = half; y < H - half; ++y) {
    for (int x = half; x < W - half; ++x) {
      double s = 0, ss = 0;
      for (int dy = -half; dy <= half; ++dy) {
        s += rs[std::size_t(y + dy) * W + x];
        ss += rss[std::size_t(y + dy) * W + x];
      }
      const std::size_t i = std::size_t(y) * W + x;
      st.mean[i] = s / n;
      st.var[i] = ss / n - st.mean[i] * st.mean[i];
      st.ok[i] = st.var[i] >= kVarianceFloor;
    }
  }
  return st;
}

inline bool bilinear(const Image& img, float u, float v, float& out) {
  const float x = u - 0.5f, y = v - 0.5f;
  const float fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  if (x0 < 0 || y0 < 0 || x0 + 1 >= img.cols() || y0 + 1 >= img.rows()) return false;
  const float ax = x - fx, ay = y - fy;
  const float* r0 = img.data() + std::ptrdiff_t(y0) * img.cols() + x0;
  const float* r1 = r0 + img.cols();
  const float top = r0[0] + ax * (r0[1] - r0[0]);
  const float bot = r1[0] + ax * (r1[1] - r1[0]);
  out = top + ay * (bot - top);
  return true;
}

struct ViewGeometry {
  const Image* image;
  FisheyeCameraf camera;
  std::vector<Eigen::Vector3f> rotatedRays;  // R_refToSrc * ray(p)
  Eigen::Vector3f translation;
};

}  // namespace

std::size_t PlaneSet::count(SweepDirection dir) const {
  return static_cast<std::size_t>(
      std::count_if(planes.begin(), planes.end(), [dir](const SweepPlane& p) { return p.direction == dir; }));
}

void SweepConfig::validate() const {
  if (nFronto < 0 || nGround < 0 || nFronto + nGround == 0) throw std::invalid_argument("SweepConfig: no planes");
  if (!(zMin > 0 && zMin < zMax)) throw std::invalid_argument("SweepConfig: need 0 < z_min < z_max");
  if (windowFull < 1 || windowFull % 2 == 0 || windowLow < 1 || windowLow % 2 == 0) {
    throw std::invalid_argument("SweepConfig: window sizes must be odd");
  }
  if (groundBandHalfwidth < 0) throw std::invalid_argument("SweepConfig: negative ground band");
  if (cropWidth <= 0 || cropHeight <= 0) throw std::invalid_argument("SweepConfig: empty crop");
  if (bestK < 0) throw std::invalid_argument("SweepConfig: best_k must be non-negative");
}

PlaneSet generatePlanes(const SweepConfig& cfg, const PlaneEquation& ground) {
  cfg.validate();
  PlaneSet set;
  const double invNear = 1.0 / cfg.zMin, invFar = 1.0 / cfg.zMax;
  for (int k = 0; k < cfg.nFronto; ++k) {
    const double inv = cfg.nFronto == 1 ? invNear : invNear - (invNear - invFar) * k / (cfg.nFronto - 1);
    set.planes.push_back({Eigen::Vector3d::UnitZ(), 1.0 / inv, SweepDirection::Fronto});
  }
  if (cfg.nGround > 0) {
    const Eigen::Vector3d n = ground.normal.normalized();
    for (int k = 0; k < cfg.nGround; ++k) {
      const double t = cfg.nGround == 1 ? 0.0 : -1.0 + 2.0 * k / (cfg.nGround - 1);
      set.planes.push_back({n, ground.offset + t * cfg.groundBandHalfwidth, SweepDirection::Ground});
    }
  }
  return set;
}

std::optional<double> intersectPlane(const SweepPlane& plane, const Eigen::Vector3d& ray, double maxRange) {
  const double denom = plane.normal.dot(ray);
  if (!(denom > 1e-9)) return std::nullopt;
  const double t = plane.offset / denom;
  if (!(t > 0) || t > maxRange) return std::nullopt;
  return t;
}

std::optional<Eigen::Vector2d> warpPixel(const SweepPlane& plane, const FisheyeCamerad& refCam,
                                         const FisheyeCamerad& srcCam, const Posed& refToSrc,
                                         const Eigen::Vector2d& p, double maxRange) {
  const auto ray = tryBackProject(refCam, p);
  if (!ray) return std::nullopt;
  const auto t = intersectPlane(plane, *ray, maxRange);
  if (!t) return std::nullopt;
  return project(srcCam, Eigen::Vector3d(refToSrc * (*t * *ray)));
}

std::optional<double> znccCost(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("znccCost: patches must be equal and non-empty");
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  double va = 0, vb = 0, cov = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    va += da * da;
    vb += db * db;
    cov += da * db;
  }
  if (va / n < kVarianceFloor || vb / n < kVarianceFloor) return std::nullopt;
  const double zncc = std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
  return (1.0 - zncc) / 2.0;
}

SweepPlane refinedPlane(const PlaneSet& planes, int winner, double costBefore, double costAt, double costAfter) {
  const auto& set = planes.planes;
  const SweepPlane& p = set[std::size_t(winner)];
  const double curvature = costBefore - 2 * costAt + costAfter;
  if (!(curvature > 0)) return p;
  const double shift = std::clamp(0.5 * (costBefore - costAfter) / curvature, -0.5, 0.5);
  const std::size_t other = std::size_t(shift < 0 ? winner - 1 : winner + 1);
  if (other >= set.size() || set[other].direction != p.direction) return p;
  const double f = std::abs(shift);
  SweepPlane out = p;
  if (p.direction == SweepDirection::Fronto) {
    // fronto planes are evenly spaced in inverse depth
    out.offset = 1.0 / ((1 - f) / p.offset + f / set[other].offset);
  } else {
    out.offset = (1 - f) * p.offset + f * set[other].offset;
  }
  return out;
}

DepthMap sweep(const Image& reference, const FisheyeCamerad& refCam, std::span<const SupportView> support,
               const PlaneSet& planes, int window, const SweepConfig& cfg) {
  if (support.empty()) throw std::invalid_argument("sweep: need at least one support view");
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("sweep: window must be odd");
  const int W = static_cast<int>(reference.cols()), H = static_cast<int>(reference.rows());
  if (W != refCam.width || H != refCam.height) throw std::invalid_argument("sweep: reference size does not match camera");
  const int half = window / 2;
  const double n = double(window) * window;
  const auto N = static_cast<std::size_t>(W) * H;
  const auto maxRange = static_cast<float>(2.0 * cfg.zMax);
  const int nViews = static_cast<int>(support.size());
  const int bestK = cfg.bestK > 0 ? std::min(cfg.bestK, nViews) : nViews;

  DepthMap out(W, H);
  if (W < window || H < window) return out;

  // unit rays of every reference pixel; NaN outside the model's field of view
  std::vector<Eigen::Vector3d> rays(N);
#pragma omp parallel for
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      auto r = pixelRay(refCam, x, y);
      rays[std::size_t(y) * W + x] = r ? *r : Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
    }
  }

  std::vector<ViewGeometry> views(support.size());
  for (std::size_t v = 0; v < support.size(); ++v) {
    const auto& s = support[v];
    views[v].image = &s.image.get();
    views[v].camera = s.camera.cast<float>();
    views[v].translation = s.refToSrc.translation().cast<float>();
    views[v].rotatedRays.resize(N);
    const Eigen::Matrix3d R = s.refToSrc.rotation();
    for (std::size_t i = 0; i < N; ++i) views[v].rotatedRays[i] = (R * rays[i]).cast<float>();
  }

  const ReferenceStats refStats = referenceStats(reference, window);

  std::vector<TopCandidates> top(N);
  // costs of the planes on either side of the current winner (same direction)
  std::vector<float> prevCost(N, kNone), winnerPrev(N, kNone), winnerNext(N, kNone);
  std::vector<std::uint8_t> awaitingNext(N, 0);
  std::vector<float> rangeAt(N);
  std::vector<float> warped(N);
  std::vector<std::uint8_t> valid(N);
  std::vector<float> viewCost(std::size_t(nViews) * N);
  BoxSums sums;
  sums.resize(W, H, half);

  for (std::size_t k = 0; k < planes.size(); ++k) {
    const SweepPlane& plane = planes.planes[k];
    if (k > 0 && planes.planes[k - 1].direction != plane.direction) {
      std::fill(prevCost.begin(), prevCost.end(), kNone);
      std::fill(awaitingNext.begin(), awaitingNext.end(), std::uint8_t(0));
    }

    bool anyHit = false;
#pragma omp parallel for reduction(|| : anyHit)
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t i = std::size_t(y) * W + x;
        const double denom = plane.normal.dot(rays[i]);
        float t = kNone;
        if (denom > 1e-9) {
          const double r = plane.offset / denom;
          if (r > 0 && r <= maxRange) {
            t = static_cast<float>(r);
            anyHit = true;
          }
        }
        rangeAt[i] = t;
      }
    }
    if (!anyHit) {
      std::fill(prevCost.begin(), prevCost.end(), kNone);
      std::fill(awaitingNext.begin(), awaitingNext.end(), std::uint8_t(0));
      continue;
    }

    for (int v = 0; v < nViews; ++v) {
      const ViewGeometry& view = views[std::size_t(v)];
      const FisheyeCameraf& cam = view.camera;
      float* cost = viewCost.data() + std::size_t(v) * N;

      // warp the support image onto the reference grid through this plane
#pragma omp parallel for
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const std::size_t i = std::size_t(y) * W + x;
          const float t = rangeAt[i];
          valid[i] = 0;
          if (std::isnan(t)) continue;
          const Eigen::Vector3f X = t * view.rotatedRays[i] + view.translation;
          const float norm = X.norm();
          if (!(norm > 0)) continue;
          const float zs = X.z() / norm;
          const float denom = zs + cam.xi;
          if (!(denom > 1e-6f)) continue;
          if (cam.xi > 1 && !(zs * cam.xi > -1.0f + 1e-6f)) continue;
          const float inv = 1.0f / (denom * norm);
          const float u = cam.fx * X.x() * inv + cam.cx;
          const float vv = cam.fy * X.y() * inv + cam.cy;
          float sample;
          if (!bilinear(*view.image, u, vv, sample)) continue;
          warped[i] = sample;
          valid[i] = 1;
        }
      }

      // horizontal window sums
#pragma omp parallel for
      for (int y = 0; y < H; ++y) {
        const std::size_t row = std::size_t(y) * W;
        double s = 0, ss = 0, sr = 0;
        std::int32_t c = 0;
        auto add = [&](int x, double sign) {
          const std::size_t i = row + x;
          if (!valid[i]) return;
          const double w = warped[i];
          s += sign * w;
          ss += sign * w * w;
          sr += sign * w * reference(y, x);
          c += sign > 0 ? 1 : -1;
        };
        for (int x = 0; x < window; ++x) add(x, 1.0);
        for (int x = half;; ++x) {
          sums.rowW[row + x] = s;
          sums.rowWW[row + x] = ss;
          sums.rowRW[row + x] = sr;
          sums.rowCount[row + x] = c;
          if (x + half + 1 >= W) break;
          add(x + half + 1, 1.0);
          add(x - half, -1.0);
        }
      }

      // vertical sums and per-view cost
      const int firstRow = half, lastRow = H - half;  // [firstRow, lastRow)
      const int nBlocks = (lastRow - firstRow + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for
      for (int b = 0; b < nBlocks; ++b) {
        const int y0 = firstRow + b * kRowBlock;
        const int y1 = std::min(lastRow, y0 + kRowBlock);
        std::vector<double> cs(W, 0), css(W, 0), csr(W, 0);
        std::vector<std::int32_t> cc(W, 0);
        for (int dy = -half; dy <= half; ++dy) {
          const std::size_t row = std::size_t(y0 + dy) * W;
          for (int x = half; x < W - half; ++x) {
            cs[x] += sums.rowW[row + x];
            css[x] += sums.rowWW[row + x];
            csr[x] += sums.rowRW[row + x];
            cc[x] += sums.rowCount[row + x];
          }
        }
        for (int y = y0; y < y1; ++y) {
          if (y > y0) {
            const std::size_t addRow = std::size_t(y + half) * W, subRow = std::size_t(y - half - 1) * W;
            for (int x = half; x < W - half; ++x) {
              cs[x] += sums.rowW[addRow + x] - sums.rowW[subRow + x];
              css[x] += sums.rowWW[addRow + x] - sums.rowWW[subRow + x];
              csr[x] += sums.rowRW[addRow + x] - sums.rowRW[subRow + x];
              cc[x] += sums.rowCount[addRow + x] - sums.rowCount[subRow + x];
            }
          }
          const std::size_t row = std::size_t(y) * W;
          for (int x = 0; x < W; ++x) cost[row + x] = kNone;
          for (int x = half; x < W - half; ++x) {
            const std::size_t i = row + x;
            if (cc[x] != window * window || !refStats.ok[i]) continue;
            const double mw = cs[x] / n;
            const double varW = css[x] / n - mw * mw;
            if (varW < kVarianceFloor) continue;
            const double cov = csr[x] / n - refStats.mean[i] * mw;
            const double zncc = std::clamp(cov / std::sqrt(refStats.var[i] * varW), -1.0, 1.0);
            cost[i] = static_cast<float>((1.0 - zncc) / 2.0);
          }
        }
      }
      // rows without a full window
      for (int y = 0; y < std::min(half, H); ++y)
        std::fill(cost + std::size_t(y) * W, cost + std::size_t(y + 1) * W, kNone);
      for (int y = std::max(0, H - half); y < H; ++y)
        std::fill(cost + std::size_t(y) * W, cost + std::size_t(y + 1) * W, kNone);
    }

    // aggregate over views and keep the four best planes per pixel
#pragma omp parallel for
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t i = std::size_t(y) * W + x;
        std::array<float, 16> c{};
        int m = 0;
        for (int v = 0; v < nViews && m < 16; ++v) {
          const float cv = viewCost[std::size_t(v) * N + i];
          if (!std::isnan(cv)) c[std::size_t(m++)] = cv;
        }
        if (m == 0) {
          prevCost[i] = kNone;
          awaitingNext[i] = 0;
          continue;
        }
        int used = m;
        if (bestK < nViews && m > bestK) {
          std::partial_sort(c.begin(), c.begin() + bestK, c.begin() + m);
          used = bestK;
        }
        std::int64_t acc = 0;
        for (int j = 0; j < used; ++j) acc += std::llround(double(c[std::size_t(j)]) * kFixedScale);
        const double cst = double(acc) / kFixedScale / used;
        const int before = top[i][0].plane;
        insertCandidate(top[i], cst, static_cast<int>(k));
        if (top[i][0].plane != before) {
          winnerPrev[i] = prevCost[i];
          winnerNext[i] = kNone;
          awaitingNext[i] = 1;
        } else if (awaitingNext[i]) {
          winnerNext[i] = static_cast<float>(cst);
          awaitingNext[i] = 0;
        }
        prevCost[i] = static_cast<float>(cst);
      }
    }
  }

  // winner and runner-up, skipping the winner's neighbors within its sweep direction
#pragma omp parallel for
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t i = std::size_t(y) * W + x;
      const TopCandidates& t = top[i];
      if (t[0].plane < 0) continue;
      const int w = t[0].plane;
      const auto& winner = planes.planes[std::size_t(w)];
      double second = 1.0;
      for (int j = 1; j < 4; ++j) {
        const int p = t[std::size_t(j)].plane;
        if (p < 0) break;
        const bool adjacent = std::abs(p - w) == 1 && planes.planes[std::size_t(p)].direction == winner.direction;
        if (!adjacent) {
          second = t[std::size_t(j)].cost;
          break;
        }
      }
      SweepPlane chosen = winner;
      if (cfg.refine && !std::isnan(winnerPrev[i]) && !std::isnan(winnerNext[i])) {
        chosen = refinedPlane(planes, w, winnerPrev[i], t[0].cost, winnerNext[i]);
      }
      const auto range = intersectPlane(chosen, rays[i], 2.0 * cfg.zMax);
      if (!range) continue;
      out.depth(y, x) = static_cast<float>(*range);
      out.bestCost(y, x) = static_cast<float>(t[0].cost);
      out.secondCost(y, x) = static_cast<float>(std::max(second, t[0].cost));
    }
  }
  return out;
}

Image downsample2x(const Image& image) {
  const Eigen::Index h = image.rows() / 2, w = image.cols() / 2;
  Image out(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      out(r, c) = 0.25f * (image(2 * r, 2 * c) + image(2 * r, 2 * c + 1) + image(2 * r + 1, 2 * c) +
                           image(2 * r + 1, 2 * c + 1));
    }
  }
  return out;
}

DepthMap upsampleNearest(const DepthMap& low, int width, int height) {
  DepthMap out(width, height);
  for (int r = 0; r < height; ++r) {
    const int lr = std::min(r / 2, low.height() - 1);
    for (int c = 0; c < width; ++c) {
      const int lc = std::min(c / 2, low.width() - 1);
      out.depth(r, c) = low.depth(lr, lc);
      out.bestCost(r, c) = low.bestCost(lr, lc);
      out.secondCost(r, c) = low.secondCost(lr, lc);
    }
  }
  return out;
}

Eigen::Vector2i cropOrigin(int width, int height, int cropWidth, int cropHeight) {
  return {std::max(0, (width - cropWidth) / 2), std::max(0, (height - cropHeight) / 2)};
}

DepthMap multiscaleDepth(std::span<const Image> images, const CameraRig& rig, const PlaneSet& planes,
                         const SweepConfig& cfg, ScaleMode mode) {
  rig.validate(true);
  if (images.size() != rig.size()) throw std::invalid_argument("multiscaleDepth: one image per rig camera required");
  const auto& refCam = rig.cameras[rig.reference];
  const Image& ref = images[rig.reference];
  const int W = refCam.width, H = refCam.height;

  auto supportAt = [&](std::span<const Image> imgs, double scale, const std::vector<Image>* scaled) {
    std::vector<SupportView> out;
    for (std::size_t c = 0; c < rig.size(); ++c) {
      if (c == rig.reference) continue;
      const Image& img = scaled ? (*scaled)[c] : imgs[c];
      FisheyeCamerad cam = rig.cameras[c];
      if (scale != 1.0) cam = cam.scaled(scale, static_cast<int>(img.cols()), static_cast<int>(img.rows()));
      out.push_back({std::cref(img), cam, rig.referenceToCamera(c)});
    }
    return out;
  };

  if (mode == ScaleMode::Full) {
    const auto support = supportAt(images, 1.0, nullptr);
    return sweep(ref, refCam, support, planes, cfg.windowFull, cfg);
  }

  std::vector<Image> low(images.size());
  for (std::size_t c = 0; c < images.size(); ++c) low[c] = downsample2x(images[c]);
  const Image& lowRef = low[rig.reference];
  const FisheyeCamerad lowCam =
      refCam.scaled(0.5, static_cast<int>(lowRef.cols()), static_cast<int>(lowRef.rows()));
  const auto lowSupport = supportAt(images, 0.5, &low);
  DepthMap fused = upsampleNearest(sweep(lowRef, lowCam, lowSupport, planes, cfg.windowLow, cfg), W, H);
  if (mode == ScaleMode::Half) return fused;

  const int cw = std::min(cfg.cropWidth, W), ch = std::min(cfg.cropHeight, H);
  const Eigen::Vector2i origin = cropOrigin(W, H, cw, ch);
  const Image crop = ref.block(origin.y(), origin.x(), ch, cw);
  const FisheyeCamerad cropCam = refCam.cropped(origin.x(), origin.y(), cw, ch);
  const auto fullSupport = supportAt(images, 1.0, nullptr);
  const DepthMap fine = sweep(crop, cropCam, fullSupport, planes, cfg.windowFull, cfg);
  for (int r = 0; r < ch; ++r) {
    for (int c = 0; c < cw; ++c) {
      if (!fine.valid(r, c)) continue;
      fused.depth(origin.y() + r, origin.x() + c) = fine.depth(r, c);
      fused.bestCost(origin.y() + r, origin.x() + c) = fine.bestCost(r, c);
      fused.secondCost(origin.y() + r, origin.x() + c) = fine.secondCost(r, c);
    }
  }
  return fused;
}

}  // namespace fishmap
