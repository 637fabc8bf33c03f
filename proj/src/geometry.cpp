#include "fishmap/geometry.hpp"

#include <algorithm>
#include <string>

namespace fishmap {

void CameraRig::validate(bool requireStereo) const {
  if (cameras.size() != rigToCamera.size()) {
    throw std::invalid_argument("CameraRig: camera and extrinsic counts differ");
  }
  if (cameras.empty() || reference >= cameras.size()) {
    throw std::invalid_argument("CameraRig: reference index out of range");
  }
  if (requireStereo && cameras.size() < 2) {
    throw std::invalid_argument("CameraRig: stereo needs at least two cameras");
  }
  for (const auto& cam : cameras) cam.validate();
}

CameraRig CameraRig::subset(const std::vector<std::size_t>& indices) const {
  CameraRig out;
  bool hasReference = false;
  for (std::size_t idx : indices) {
    if (idx >= cameras.size()) {
      throw std::invalid_argument("CameraRig::subset: camera index " + std::to_string(idx) + " out of range");
    }
    if (idx == reference) {
      hasReference = true;
      out.reference = out.cameras.size();
    }
    out.cameras.push_back(cameras[idx]);
    out.rigToCamera.push_back(rigToCamera[idx]);
  }
  if (!hasReference) throw std::invalid_argument("CameraRig::subset: the reference camera must be included");
  return out;
}

PlaneEquation groundInCamera(const Posed& worldToCamera) {
  PlaneEquation plane;
  plane.normal = worldToCamera.rotation() * Eigen::Vector3d(0, 0, -1);
  plane.offset = plane.normal.dot(worldToCamera.translation());
  if (plane.offset < 0) {
    plane.normal = -plane.normal;
    plane.offset = -plane.offset;
  }
  return plane;
}

}  // namespace fishmap
