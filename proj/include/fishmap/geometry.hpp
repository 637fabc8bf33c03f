#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace fishmap {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

/// Rigid-body transform X' = R X + t.
template <typename Scalar>
class Pose {
 public:
  Pose() : rotation_(Mat3<Scalar>::Identity()), translation_(Vec3<Scalar>::Zero()) {}

  Pose(const Mat3<Scalar>& rotation, const Vec3<Scalar>& translation)
      : rotation_(rotation), translation_(translation) {
    const Scalar tol = std::is_same_v<Scalar, float> ? Scalar(1e-5) : Scalar(1e-9);
    const Scalar ortho = (rotation_ * rotation_.transpose() - Mat3<Scalar>::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= tol) || rotation_.determinant() <= 0) {
      throw std::invalid_argument("Pose: rotation is not a proper orthonormal matrix");
    }
  }

  /// From translation and a (not necessarily unit) quaternion.
  static Pose fromQuaternion(const Vec3<Scalar>& translation, const Eigen::Quaternion<Scalar>& q) {
    if (q.norm() < Scalar(1e-12)) throw std::invalid_argument("Pose: zero quaternion");
    return Pose(q.normalized().toRotationMatrix(), translation);
  }

  static Pose identity() { return Pose(); }

  const Mat3<Scalar>& rotation() const { return rotation_; }
  const Vec3<Scalar>& translation() const { return translation_; }
  Eigen::Quaternion<Scalar> quaternion() const { return Eigen::Quaternion<Scalar>(rotation_); }

  Vec3<Scalar> operator*(const Vec3<Scalar>& x) const { return rotation_ * x + translation_; }

  /// (a * b)(x) = a(b(x)).
  Pose operator*(const Pose& other) const {
    Pose out;
    out.rotation_ = rotation_ * other.rotation_;
    out.translation_ = rotation_ * other.translation_ + translation_;
    return out;
  }

  Pose inverse() const {
    Pose out;
    out.rotation_ = rotation_.transpose();
    out.translation_ = -(out.rotation_ * translation_);
    return out;
  }

  template <typename Other>
  Pose<Other> cast() const {
    Pose<Other> out;
    out.rotation_ = rotation_.template cast<Other>();
    out.translation_ = translation_.template cast<Other>();
    return out;
  }

 private:
  template <typename>
  friend class Pose;

  Mat3<Scalar> rotation_;
  Vec3<Scalar> translation_;
};

using Posed = Pose<double>;
using Posef = Pose<float>;

template <typename Scalar>
Vec3<Scalar> se3Apply(const Pose<Scalar>& pose, const Vec3<Scalar>& x) {
  return pose * x;
}

/// Unified projective (sphere + shifted pinhole) fisheye camera.
///
/// Continuous pixel coordinates place the center of pixel (i, j) at
/// (i + 0.5, j + 0.5); pixel index is floor(u), floor(v).
template <typename Scalar>
struct FisheyeCamera {
  Scalar xi = 1;
  Scalar fx = 220;
  Scalar fy = 220;
  Scalar cx = 512;
  Scalar cy = 272;
  int width = 1024;
  int height = 544;

  void validate() const {
    if (!(xi >= 0 && xi <= 3)) throw std::invalid_argument("FisheyeCamera: xi must lie in [0, 3]");
    if (!(fx > 0 && fy > 0)) throw std::invalid_argument("FisheyeCamera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("FisheyeCamera: empty image");
    if (!(cx >= 0 && cx < width && cy >= 0 && cy < height)) {
      throw std::invalid_argument("FisheyeCamera: principal point outside the image");
    }
  }

  bool contains(const Vec2<Scalar>& p) const {
    return p.x() >= 0 && p.x() < width && p.y() >= 0 && p.y() < height;
  }

  /// Intrinsics for an image resampled by `factor` (0.5 for 2x2 box downsampling).
  FisheyeCamera scaled(Scalar factor, int newWidth, int newHeight) const {
    FisheyeCamera out = *this;
    out.fx *= factor;
    out.fy *= factor;
    out.cx *= factor;
    out.cy *= factor;
    out.width = newWidth;
    out.height = newHeight;
    return out;
  }

  /// Intrinsics for the window [x0, x0 + w) x [y0, y0 + h) of this image.
  FisheyeCamera cropped(int x0, int y0, int w, int h) const {
    FisheyeCamera out = *this;
    out.cx -= x0;
    out.cy -= y0;
    out.width = w;
    out.height = h;
    return out;
  }

  template <typename Other>
  FisheyeCamera<Other> cast() const {
    return {Other(xi), Other(fx), Other(fy), Other(cx), Other(cy), width, height};
  }
};

using FisheyeCamerad = FisheyeCamera<double>;
using FisheyeCameraf = FisheyeCamera<float>;

/// Projection to continuous pixel coordinates, ignoring image bounds.
/// Empty when the point is at the origin, the shifted denominator is not
/// positive, or the direction lies outside the invertible part of the model.
template <typename Scalar>
std::optional<Vec2<Scalar>> projectUnbounded(const FisheyeCamera<Scalar>& cam, const Vec3<Scalar>& x) {
  const Scalar norm = x.norm();
  if (!(norm > 0)) return std::nullopt;
  const Scalar zs = x.z() / norm;
  const Scalar denom = zs + cam.xi;
  if (!(denom > Scalar(1e-9))) return std::nullopt;
  // for xi > 1 the lifting is single valued only on zs > -1/xi
  if (cam.xi > 1 && !(zs * cam.xi > Scalar(-1) + Scalar(1e-9))) return std::nullopt;
  const Scalar inv = Scalar(1) / (denom * norm);
  return Vec2<Scalar>(cam.fx * x.x() * inv + cam.cx, cam.fy * x.y() * inv + cam.cy);
}

template <typename Scalar>
std::optional<Vec2<Scalar>> project(const FisheyeCamera<Scalar>& cam, const Vec3<Scalar>& x) {
  auto p = projectUnbounded(cam, x);
  if (!p || !cam.contains(*p)) return std::nullopt;
  return p;
}

/// Unit ray through continuous pixel p; empty outside the model's valid field of view.
template <typename Scalar>
std::optional<Vec3<Scalar>> tryBackProject(const FisheyeCamera<Scalar>& cam, const Vec2<Scalar>& p) {
  const Scalar x = (p.x() - cam.cx) / cam.fx;
  const Scalar y = (p.y() - cam.cy) / cam.fy;
  const Scalar r2 = x * x + y * y;
  const Scalar radicand = 1 + (1 - cam.xi * cam.xi) * r2;
  if (radicand < 0) return std::nullopt;
  const Scalar factor = (cam.xi + std::sqrt(radicand)) / (r2 + 1);
  Vec3<Scalar> ray(factor * x, factor * y, factor - cam.xi);
  const Scalar n = ray.norm();
  if (!(n > 0)) return std::nullopt;
  return Vec3<Scalar>(ray / n);
}

template <typename Scalar>
Vec3<Scalar> backProject(const FisheyeCamera<Scalar>& cam, const Vec2<Scalar>& p) {
  auto ray = tryBackProject(cam, p);
  if (!ray) throw std::domain_error("backProject: pixel outside the camera model's field of view");
  return *ray;
}

/// Ray through the center of pixel index (col, row).
template <typename Scalar>
std::optional<Vec3<Scalar>> pixelRay(const FisheyeCamera<Scalar>& cam, int col, int row) {
  return tryBackProject(cam, Vec2<Scalar>(Scalar(col) + Scalar(0.5), Scalar(row) + Scalar(0.5)));
}

/// Ordered cameras with rig-to-camera extrinsics.
struct CameraRig {
  std::vector<FisheyeCamerad> cameras;
  std::vector<Posed> rigToCamera;
  std::size_t reference = 0;

  std::size_t size() const { return cameras.size(); }
  void validate(bool requireStereo = true) const;
  /// Keeps the listed cameras in the given order; the reference must be among them.
  CameraRig subset(const std::vector<std::size_t>& indices) const;
  /// Pose mapping reference-camera coordinates to camera `index` coordinates.
  Posed referenceToCamera(std::size_t index) const {
    return rigToCamera[index] * rigToCamera[reference].inverse();
  }
};

/// Plane n.X = d, n unit.
struct PlaneEquation {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0;
};

/// The world ground (z = 0) expressed in a camera frame, normal pointing away from the camera.
PlaneEquation groundInCamera(const Posed& worldToCamera);

}  // namespace fishmap
