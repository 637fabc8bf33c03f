#include "fishmap/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fishmap {
namespace {

constexpr double kRayEps = 1e-9;

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

double latticeValue(std::int64_t ix, std::int64_t iy, std::int64_t iz, std::uint64_t seed) {
  std::uint64_t h = mix64(seed ^ 0x9e3779b97f4a7c15ULL);
  h = mix64(h ^ static_cast<std::uint64_t>(ix));
  h = mix64(h ^ static_cast<std::uint64_t>(iy));
  h = mix64(h ^ static_cast<std::uint64_t>(iz));
  return double(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * (3.0 - 2.0 * t); }

double valueNoise(const Eigen::Vector3d& p, std::uint64_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy), iz = static_cast<std::int64_t>(fz);
  const double tx = fade(p.x() - fx), ty = fade(p.y() - fy), tz = fade(p.z() - fz);
  double c[2][2][2];
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) c[dz][dy][dx] = latticeValue(ix + dx, iy + dy, iz + dz, seed);
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double x00 = lerp(c[0][0][0], c[0][0][1], tx), x01 = lerp(c[0][1][0], c[0][1][1], tx);
  const double x10 = lerp(c[1][0][0], c[1][0][1], tx), x11 = lerp(c[1][1][0], c[1][1][1], tx);
  return lerp(lerp(x00, x01, ty), lerp(x10, x11, ty), tz);
}

Eigen::Matrix3d yawRotation(double yawDeg) {
  return Eigen::AngleAxisd(yawDeg * std::numbers::pi / 180.0, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

// Ray parameter of the nearest hit in the primitive's local frame, or +inf.
double intersectLocal(const Primitive& prim, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (prim.kind) {
    case PrimitiveKind::Ground: {
      if (std::abs(d.z()) < 1e-12) return inf;
      const double s = -o.z() / d.z();
      return s > kRayEps ? s : inf;
    }
    case PrimitiveKind::Quad: {
      if (std::abs(d.y()) < 1e-12) return inf;
      const double s = -o.y() / d.y();
      if (!(s > kRayEps)) return inf;
      const Eigen::Vector3d p = o + s * d;
      if (std::abs(p.x()) > prim.halfExtents.x() || std::abs(p.z()) > prim.halfExtents.z()) return inf;
      return s;
    }
    case PrimitiveKind::Box: {
      double tNear = -inf, tFar = inf;
      for (int k = 0; k < 3; ++k) {
        const double h = prim.halfExtents[k];
        if (std::abs(d[k]) < 1e-15) {
          if (std::abs(o[k]) > h) return inf;
          continue;
        }
        double t0 = (-h - o[k]) / d[k], t1 = (h - o[k]) / d[k];
        if (t0 > t1) std::swap(t0, t1);
        tNear = std::max(tNear, t0);
        tFar = std::min(tFar, t1);
        if (tNear > tFar) return inf;
      }
      if (tNear > kRayEps) return tNear;
      if (tFar > kRayEps) return tFar;
      return inf;
    }
    case PrimitiveKind::Sphere: {
      const double b = o.dot(d);
      const double c = o.squaredNorm() - prim.radius * prim.radius;
      const double disc = b * b - c;
      if (disc < 0) return inf;
      const double sq = std::sqrt(disc);
      if (-b - sq > kRayEps) return -b - sq;
      if (-b + sq > kRayEps) return -b + sq;
      return inf;
    }
  }
  return inf;
}

const char* kindName(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Ground: return "ground";
    case PrimitiveKind::Quad: return "quad";
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Sphere: return "sphere";
  }
  return "?";
}

}  // namespace

Posed Primitive::localToWorld(double t) const {
  if (kind == PrimitiveKind::Ground) return Posed();
  return Posed(yawRotation(yawDeg), center + velocity * t);
}

std::vector<Eigen::Vector3d> Primitive::worldVertices(double t) const {
  const Posed pose = localToWorld(t);
  std::vector<Eigen::Vector3d> out;
  Eigen::Vector3d h = halfExtents;
  if (kind == PrimitiveKind::Sphere) h.setConstant(radius);
  if (kind == PrimitiveKind::Quad) {
    for (int sx : {-1, 1})
      for (int sz : {-1, 1}) out.push_back(pose * Eigen::Vector3d(sx * h.x(), 0, sz * h.z()));
    return out;
  }
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) out.push_back(pose * Eigen::Vector3d(sx * h.x(), sy * h.y(), sz * h.z()));
  return out;
}

void Scene::validate() const {
  for (const auto& p : primitives) {
    if (p.texture.scale <= 0 || p.texture.octaves < 1) {
      throw std::invalid_argument("Scene: primitive " + std::to_string(p.id) + " has an invalid texture");
    }
    if (p.kind == PrimitiveKind::Sphere && p.radius <= 0) {
      throw std::invalid_argument("Scene: sphere " + std::to_string(p.id) + " needs a positive radius");
    }
    if (p.kind == PrimitiveKind::Ground && p.moving()) throw std::invalid_argument("Scene: the ground cannot move");
  }
}

namespace {

// Primitive placement resolved for one ray origin and time.
struct PreparedPrimitive {
  Eigen::Matrix3d worldToLocal;
  Eigen::Vector3d localOrigin;
  Eigen::Vector3d center;
  double boundRadius2 = 0;
  bool bounded = false;
};

std::vector<PreparedPrimitive> prepareScene(const Scene& scene, const Eigen::Vector3d& origin, double t) {
  std::vector<PreparedPrimitive> out(scene.primitives.size());
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const auto& prim = scene.primitives[i];
    auto& pp = out[i];
    if (prim.kind == PrimitiveKind::Ground) {
      pp.worldToLocal.setIdentity();
      pp.localOrigin = origin;
      continue;
    }
    const Posed toWorld = prim.localToWorld(t);
    pp.worldToLocal = toWorld.rotation().transpose();
    pp.localOrigin = pp.worldToLocal * (origin - toWorld.translation());
    pp.center = toWorld.translation();
    const double r = prim.kind == PrimitiveKind::Sphere ? prim.radius : prim.halfExtents.norm();
    pp.boundRadius2 = (r * (1 + 1e-9) + 1e-9) * (r * (1 + 1e-9) + 1e-9);
    pp.bounded = true;
  }
  return out;
}

std::optional<RayHit> intersectPrepared(const Scene& scene, const std::vector<PreparedPrimitive>& prepared,
                                        const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  RayHit best;
  best.range = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const auto& pp = prepared[i];
    if (pp.bounded) {
      const Eigen::Vector3d v = pp.center - origin;
      const double tca = v.dot(dir);
      const double dist2 = v.squaredNorm() - tca * tca;
      if (dist2 > pp.boundRadius2) continue;
      if (tca < 0 && v.squaredNorm() > pp.boundRadius2) continue;
    }
    const Eigen::Vector3d d = pp.worldToLocal * dir;
    const double s = intersectLocal(scene.primitives[i], pp.localOrigin, d);
    if (s < best.range) {
      best.range = s;
      best.primitiveIndex = static_cast<int>(i);
      best.localPoint = pp.localOrigin + s * d;
    }
  }
  if (best.primitiveIndex < 0) return std::nullopt;
  return best;
}

}  // namespace

std::optional<RayHit> intersectScene(const Scene& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                     double t) {
  return intersectPrepared(scene, prepareScene(scene, origin, t), origin, dir);
}

double textureIntensity(const Scene& scene, int primitiveIndex, const Eigen::Vector3d& localPoint) {
  const auto& prim = scene.primitives.at(static_cast<std::size_t>(primitiveIndex));
  const Texture& tex = prim.texture;
  if (tex.contrast == 0) return std::clamp(tex.base, 0.0, 1.0);
  const std::uint64_t seed = mix64(scene.textureSeed * 0x100000001b3ULL + static_cast<std::uint64_t>(prim.id));
  double sum = 0, norm = 0, amp = 1, freq = 1.0 / tex.scale;
  for (int o = 0; o < tex.octaves; ++o) {
    sum += amp * valueNoise(localPoint * freq, seed + static_cast<std::uint64_t>(o) * 0x632be59bd9b4e019ULL);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  // stretch the value-noise distribution (concentrated around 0.5) toward [0, 1]
  const double fbm = std::clamp(0.5 + 1.8 * (sum / norm - 0.5), 0.0, 1.0);
  return std::clamp(tex.base + tex.contrast * (fbm - 0.5), 0.0, 1.0);
}

FisheyeRenderer::FisheyeRenderer(Scene scene, CameraRig rig) : scene_(std::move(scene)), rig_(std::move(rig)) {
  if (scene_.empty()) throw std::invalid_argument("FisheyeRenderer: empty scene");
  scene_.validate();
  rig_.validate(false);
  rays_.resize(rig_.size());
  for (std::size_t c = 0; c < rig_.size(); ++c) {
    const auto& cam = rig_.cameras[c];
    auto& rays = rays_[c];
    rays.resize(static_cast<std::size_t>(cam.width) * cam.height);
    for (int r = 0; r < cam.height; ++r) {
      for (int col = 0; col < cam.width; ++col) {
        auto ray = pixelRay(cam, col, r);
        rays[std::size_t(r) * cam.width + col] =
            ray ? *ray : Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
      }
    }
  }
}

FramePacket FisheyeRenderer::render(const Posed& bodyToWorld, double t, int frameId, const RenderOptions& opts) const {
  FramePacket packet;
  packet.frameId = frameId;
  packet.timestamp = t;
  packet.bodyToWorld = bodyToWorld;
  packet.images.resize(rig_.size());
  packet.gtDepth.resize(rig_.size());

  std::vector<std::size_t> cams = opts.cameras;
  if (cams.empty()) {
    for (std::size_t c = 0; c < rig_.size(); ++c) cams.push_back(c);
  }

  for (std::size_t c : cams) {
    const auto& cam = rig_.cameras.at(c);
    const Posed camToWorld = bodyToWorld * rig_.rigToCamera[c].inverse();
    const Eigen::Vector3d origin = camToWorld.translation();
    const Eigen::Matrix3d rot = camToWorld.rotation();
    Image image(cam.height, cam.width);
    Raster<float> depth = Raster<float>::Zero(cam.height, cam.width);
    Raster<int> hitId = Raster<int>::Constant(cam.height, cam.width, -1);
    const auto& rays = rays_[c];
    const auto prepared = prepareScene(scene_, origin, t);

#pragma omp parallel for schedule(dynamic, 4)
    for (int r = 0; r < cam.height; ++r) {
      for (int col = 0; col < cam.width; ++col) {
        const Eigen::Vector3d& ray = rays[std::size_t(r) * cam.width + col];
        image(r, col) = static_cast<float>(scene_.skyIntensity);
        if (std::isnan(ray.x())) continue;
        auto hit = intersectPrepared(scene_, prepared, origin, rot * ray);
        if (!hit) continue;
        image(r, col) = static_cast<float>(textureIntensity(scene_, hit->primitiveIndex, hit->localPoint));
        depth(r, col) = static_cast<float>(hit->range);
        hitId(r, col) = hit->primitiveIndex;
      }
    }

    if (opts.withNoise && scene_.noiseSigma > 0) {
      std::mt19937_64 rng(mix64(scene_.textureSeed ^ mix64(std::uint64_t(frameId) * 977 + c + 1)));
      std::normal_distribution<double> noise(0.0, scene_.noiseSigma);
      for (Eigen::Index i = 0; i < image.size(); ++i) {
        image.data()[i] = std::clamp(static_cast<float>(image.data()[i] + noise(rng)), 0.0f, 1.0f);
      }
    }

    if (c == rig_.reference) {
      for (std::size_t i = 0; i < scene_.primitives.size(); ++i) {
        const auto& prim = scene_.primitives[i];
        if (!prim.moving()) continue;
        int x0 = cam.width, y0 = cam.height, x1 = -1, y1 = -1;
        for (int r = 0; r < cam.height; ++r) {
          for (int col = 0; col < cam.width; ++col) {
            if (hitId(r, col) != static_cast<int>(i)) continue;
            x0 = std::min(x0, col);
            x1 = std::max(x1, col);
            y0 = std::min(y0, r);
            y1 = std::max(y1, r);
          }
        }
        if (x1 < 0) continue;
        // one pixel of slack so the box covers the sub-pixel silhouette
        x0 = std::max(0, x0 - 1);
        y0 = std::max(0, y0 - 1);
        x1 = std::min(cam.width - 1, x1 + 1);
        y1 = std::min(cam.height - 1, y1 + 1);
        packet.detections.push_back({frameId, prim.classId, x0, y0, x1 - x0 + 1, y1 - y0 + 1, 1.0});
      }
    }

    packet.images[c] = std::move(image);
    if (opts.withDepth) packet.gtDepth[c] = std::move(depth);
  }
  return packet;
}

FramePacket renderFrame(const Scene& scene, const CameraRig& rig, const Posed& bodyToWorld, double t, int frameId) {
  return FisheyeRenderer(scene, rig).render(bodyToWorld, t, frameId);
}

std::vector<StampedPose> scriptTrajectory(double lengthM, double speedMps, double frameRateHz,
                                          const TrajectoryOptions& opts) {
  if (!(lengthM > 0 && speedMps > 0 && frameRateHz > 0)) {
    throw std::invalid_argument("scriptTrajectory: arguments must be positive");
  }
  const double step = speedMps / frameRateHz;
  const auto count = static_cast<std::size_t>(std::floor(lengthM / step + 1e-9)) + 1;
  const double heading0 = opts.headingDeg * std::numbers::pi / 180.0;
  std::vector<StampedPose> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double s = double(k) * step;
    const double heading = heading0 + opts.curvature * s;
    Eigen::Vector3d pos = opts.start;
    if (std::abs(opts.curvature) < 1e-12) {
      pos += s * Eigen::Vector3d(std::cos(heading0), std::sin(heading0), 0);
    } else {
      pos.x() += (std::sin(heading) - std::sin(heading0)) / opts.curvature;
      pos.y() += (std::cos(heading0) - std::cos(heading)) / opts.curvature;
    }
    out.push_back({double(k) / frameRateHz, Posed(yawRotation(heading * 180.0 / std::numbers::pi), pos)});
  }
  return out;
}

CameraRig makeLinearRig(int count, double spacing, double height, FisheyeCamerad camera) {
  if (count < 1) throw std::invalid_argument("makeLinearRig: need at least one camera");
  // camera z forward (body x), x right (-body y), y down (-body z)
  Eigen::Matrix3d bodyToCam;
  bodyToCam << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  CameraRig rig;
  for (int i = 0; i < count; ++i) {
    const double lateral = (count - 1) / 2.0 * spacing - i * spacing;
    const Eigen::Vector3d centerInBody(0, lateral, height);
    rig.cameras.push_back(camera);
    rig.rigToCamera.emplace_back(bodyToCam, -(bodyToCam * centerInBody));
  }
  rig.reference = static_cast<std::size_t>(count / 2);
  rig.validate(false);
  return rig;
}

namespace scenes {
namespace {

Primitive ground(double scale = 0.35) {
  Primitive g;
  g.id = 0;
  g.kind = PrimitiveKind::Ground;
  g.texture = {0.45, 0.6, scale, 3};
  return g;
}

Primitive box(int id, Eigen::Vector3d center, Eigen::Vector3d half, Texture tex, double yaw = 0) {
  Primitive p;
  p.id = id;
  p.kind = PrimitiveKind::Box;
  p.center = center;
  p.halfExtents = half;
  p.texture = tex;
  p.yawDeg = yaw;
  return p;
}

Primitive wall(int id, Eigen::Vector3d center, double halfWidth, double halfHeight, double yaw, Texture tex) {
  Primitive p;
  p.id = id;
  p.kind = PrimitiveKind::Quad;
  p.center = center;
  p.halfExtents = Eigen::Vector3d(halfWidth, 0, halfHeight);
  p.yawDeg = yaw;
  p.texture = tex;
  return p;
}

double jitter(std::uint64_t seed, int k) { return latticeValue(k, 17, 3, seed); }

}  // namespace

Scene frontoPlane(double distance, double halfWidth, double halfHeight) {
  Scene s;
  // yaw 90: the quad's local x axis runs along world y, so it faces the +x viewing direction
  s.primitives.push_back(wall(1, {distance, 0, 0}, halfWidth, halfHeight, 90, {0.5, 0.7, 0.4, 3}));
  s.noiseSigma = 0;
  return s;
}

Scene urbanStreet(std::uint64_t seed, double streetLength) {
  Scene s;
  s.textureSeed = seed;
  s.primitives.push_back(ground());
  int id = 1;
  for (int side : {1, -1}) {
    double x = -25;
    int k = 0;
    while (x < streetLength) {
      const double len = 8 + 6 * jitter(seed + side + 2, k);
      const double height = 6 + 8 * jitter(seed + side + 4, k);
      const double setback = 6 + 1.0 * jitter(seed + side + 6, k);
      const double depth = 8;
      Texture tex{0.35 + 0.3 * jitter(seed + side + 8, k), 0.6, 0.3 + 0.25 * jitter(seed + side + 10, k), 3};
      s.primitives.push_back(
          box(id++, {x + len / 2, side * (setback + depth / 2), height / 2}, {len / 2, depth / 2, height / 2}, tex));
      x += len + 1.5 + 2 * jitter(seed + side + 12, k);
      ++k;
    }
  }
  // parked cars and poles along both curbs
  for (int k = 0; k < 8; ++k) {
    const int side = k % 2 == 0 ? 1 : -1;
    const double x = 4 + k * (streetLength - 10) / 8.0 + 3 * jitter(seed + 20, k);
    Texture tex{0.3 + 0.4 * jitter(seed + 21, k), 0.7, 0.25, 3};
    s.primitives.push_back(box(id++, {x, side * 4.2, 0.75}, {2.1, 0.9, 0.75}, tex));
  }
  for (int k = 0; k < 6; ++k) {
    const int side = k % 2 == 0 ? -1 : 1;
    const double x = 8 + k * (streetLength - 12) / 6.0;
    s.primitives.push_back(box(id++, {x, side * 5.3, 2.0}, {0.15, 0.15, 2.0}, {0.3, 0.6, 0.2, 2}));
  }
  // closing wall at the end of the street
  s.primitives.push_back(wall(id++, {streetLength, 0, 6}, 14, 6, 90, {0.5, 0.65, 0.4, 3}));
  return s;
}

Scene movingBox(std::uint64_t seed, double streetLength) {
  Scene s = urbanStreet(seed, streetLength);
  Primitive car;
  car.id = 100;
  car.kind = PrimitiveKind::Box;
  // oncoming lane, body floating above the road so the swept volume stays clear of the ground
  car.center = Eigen::Vector3d(std::min(30.0, streetLength - 8), -1.9, 1.05);
  car.halfExtents = Eigen::Vector3d(2.2, 0.7, 0.6);
  car.velocity = Eigen::Vector3d(-9, 0, 0);
  car.texture = {0.4, 0.7, 0.25, 3};
  car.classId = 2;
  s.primitives.push_back(car);
  return s;
}

Scene farStructure(std::uint64_t seed) {
  Scene s;
  s.textureSeed = seed;
  s.noiseSigma = 0.01;
  s.primitives.push_back(ground(0.5));
  int id = 1;
  s.primitives.push_back(wall(id++, {50, 0, 10}, 60, 12, 90, {0.5, 0.7, 0.6, 3}));
  for (int k = 0; k < 7; ++k) {
    const double x = 30 + 15 * jitter(seed, k);
    const double y = -18 + 6 * k;
    const double h = 5 + 10 * jitter(seed + 1, k);
    s.primitives.push_back(box(id++, {x, y, h / 2}, {2, 2.5, h / 2}, {0.45, 0.7, 0.5, 3}));
  }
  return s;
}

Scene noisyFacade(std::uint64_t seed) {
  Scene s;
  s.textureSeed = seed;
  s.noiseSigma = 0.02;
  s.primitives.push_back(ground());
  int id = 1;
  // featureless facade filling the upper-left part of the view
  s.primitives.push_back(wall(id++, {18, 6, 6}, 8, 6, 90, {0.7, 0.0, 1.0, 1}));
  s.primitives.push_back(box(id++, {12, -5, 3}, {3, 2, 3}, {0.4, 0.6, 0.35, 3}));
  s.primitives.push_back(box(id++, {8, 3, 1}, {1.5, 1, 1}, {0.5, 0.7, 0.25, 3}));
  s.primitives.push_back(box(id++, {25, -2, 4}, {2, 3, 4}, {0.45, 0.6, 0.4, 3}));
  s.primitives.push_back(wall(id++, {40, 0, 8}, 30, 8, 90, {0.5, 0.6, 0.5, 3}));
  return s;
}

}  // namespace scenes

Scene loadScene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open scene");
  Scene scene;
  std::string line;
  int lineNo = 0;
  int nextId = 1;
  auto fail = [&](const std::string& what) {
    return std::runtime_error(path.string() + ":" + std::to_string(lineNo) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineNo;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string head;
    if (!(ss >> head)) continue;
    auto num = [&](const std::string& key) {
      double v;
      if (!(ss >> v)) throw fail("missing number after '" + key + "'");
      return v;
    };
    auto vec = [&](const std::string& key) {
      Eigen::Vector3d v;
      for (int k = 0; k < 3; ++k) v[k] = num(key);
      return v;
    };
    if (head == "seed") {
      scene.textureSeed = static_cast<std::uint64_t>(num(head));
    } else if (head == "sky") {
      scene.skyIntensity = num(head);
    } else if (head == "noise") {
      scene.noiseSigma = num(head);
    } else if (head == "ground" || head == "quad" || head == "box" || head == "sphere") {
      Primitive p;
      p.kind = head == "ground" ? PrimitiveKind::Ground
               : head == "quad" ? PrimitiveKind::Quad
               : head == "box"  ? PrimitiveKind::Box
                                : PrimitiveKind::Sphere;
      p.id = p.kind == PrimitiveKind::Ground ? 0 : -1;
      std::string key;
      while (ss >> key) {
        if (key == "id") p.id = static_cast<int>(num(key));
        else if (key == "center") p.center = vec(key);
        else if (key == "yaw") p.yawDeg = num(key);
        else if (key == "half") p.halfExtents = vec(key);
        else if (key == "radius") p.radius = num(key);
        else if (key == "velocity") p.velocity = vec(key);
        else if (key == "class") p.classId = static_cast<int>(num(key));
        else if (key == "base") p.texture.base = num(key);
        else if (key == "contrast") p.texture.contrast = num(key);
        else if (key == "scale") p.texture.scale = num(key);
        else if (key == "octaves") p.texture.octaves = static_cast<int>(num(key));
        else throw fail("unknown primitive key '" + key + "'");
      }
      if (p.id < 0) p.id = nextId;
      nextId = std::max(nextId, p.id + 1);
      scene.primitives.push_back(p);
    } else {
      throw fail("unknown entry '" + head + "'");
    }
  }
  scene.validate();
  return scene;
}

void saveScene(const std::filesystem::path& path, const Scene& scene) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  char buf[512];
  std::snprintf(buf, sizeof buf, "seed %llu\nsky %.17g\nnoise %.17g\n",
                static_cast<unsigned long long>(scene.textureSeed), scene.skyIntensity, scene.noiseSigma);
  out << buf;
  for (const auto& p : scene.primitives) {
    const auto& t = p.texture;
    out << kindName(p.kind);
    if (p.kind != PrimitiveKind::Ground) {
      std::snprintf(buf, sizeof buf, " id %d center %.17g %.17g %.17g yaw %.17g", p.id, p.center.x(), p.center.y(),
                    p.center.z(), p.yawDeg);
      out << buf;
      if (p.kind == PrimitiveKind::Sphere) {
        std::snprintf(buf, sizeof buf, " radius %.17g", p.radius);
      } else {
        std::snprintf(buf, sizeof buf, " half %.17g %.17g %.17g", p.halfExtents.x(), p.halfExtents.y(),
                      p.halfExtents.z());
      }
      out << buf;
      if (p.moving()) {
        std::snprintf(buf, sizeof buf, " velocity %.17g %.17g %.17g class %d", p.velocity.x(), p.velocity.y(),
                      p.velocity.z(), p.classId);
        out << buf;
      }
    }
    std::snprintf(buf, sizeof buf, " base %.17g contrast %.17g scale %.17g octaves %d\n", t.base, t.contrast, t.scale,
                  t.octaves);
    out << buf;
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace fishmap
