#include "fishmap/rig_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fishmap {
namespace {

std::string stripComment(const std::string& line) {
  const auto hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

std::runtime_error parseError(const std::filesystem::path& path, int lineNo, const std::string& what) {
  return std::runtime_error(path.string() + ":" + std::to_string(lineNo) + ": " + what);
}

std::string formatPose(const Posed& pose) {
  const Eigen::Quaterniond q = pose.quaternion();
  const auto& t = pose.translation();
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g", t.x(), t.y(), t.z(), q.x(), q.y(),
                q.z(), q.w());
  return buf;
}

Posed poseFromNumbers(const double* v) {
  return Posed::fromQuaternion(Eigen::Vector3d(v[0], v[1], v[2]), Eigen::Quaterniond(v[6], v[3], v[4], v[5]));
}

}  // namespace

CameraRig loadRig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open rig file");
  CameraRig rig;
  bool inCamera = false;
  bool haveExtrinsic = false;
  FisheyeCamerad cam;
  Posed extrinsic;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    std::istringstream ss(stripComment(line));
    std::string key;
    while (ss >> key) {
      if (key == "reference") {
        if (!(ss >> rig.reference)) throw parseError(path, lineNo, "bad reference index");
      } else if (key == "camera") {
        if (inCamera) throw parseError(path, lineNo, "nested camera block");
        inCamera = true;
        haveExtrinsic = false;
        cam = FisheyeCamerad{};
        extrinsic = Posed{};
      } else if (key == "end") {
        if (!inCamera) throw parseError(path, lineNo, "'end' outside a camera block");
        if (!haveExtrinsic) throw parseError(path, lineNo, "camera block without extrinsic");
        rig.cameras.push_back(cam);
        rig.rigToCamera.push_back(extrinsic);
        inCamera = false;
      } else if (!inCamera) {
        throw parseError(path, lineNo, "unexpected key '" + key + "' outside a camera block");
      } else if (key == "extrinsic") {
        double v[7];
        for (double& x : v) {
          if (!(ss >> x)) throw parseError(path, lineNo, "extrinsic needs 7 numbers");
        }
        try {
          extrinsic = poseFromNumbers(v);
        } catch (const std::invalid_argument& e) {
          throw parseError(path, lineNo, e.what());
        }
        haveExtrinsic = true;
      } else {
        double v = 0;
        if (!(ss >> v)) throw parseError(path, lineNo, "missing value for '" + key + "'");
        if (key == "xi") cam.xi = v;
        else if (key == "fx") cam.fx = v;
        else if (key == "fy") cam.fy = v;
        else if (key == "cx") cam.cx = v;
        else if (key == "cy") cam.cy = v;
        else if (key == "width") cam.width = static_cast<int>(v);
        else if (key == "height") cam.height = static_cast<int>(v);
        else throw parseError(path, lineNo, "unknown camera key '" + key + "'");
      }
    }
  }
  if (inCamera) throw parseError(path, lineNo, "unterminated camera block");
  rig.validate(false);
  return rig;
}

void saveRig(const std::filesystem::path& path, const CameraRig& rig) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "# fisheye rig: unified projective intrinsics, rig-to-camera extrinsic (tx ty tz qx qy qz qw)\n";
  out << "reference " << rig.reference << "\n";
  char buf[256];
  for (std::size_t i = 0; i < rig.size(); ++i) {
    const auto& c = rig.cameras[i];
    out << "camera\n";
    std::snprintf(buf, sizeof buf, "  xi %.17g\n  fx %.17g\n  fy %.17g\n  cx %.17g\n  cy %.17g\n", c.xi, c.fx, c.fy,
                  c.cx, c.cy);
    out << buf;
    out << "  width " << c.width << "\n  height " << c.height << "\n";
    out << "  extrinsic " << formatPose(rig.rigToCamera[i]) << "\nend\n";
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::vector<StampedPose> loadTrajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open trajectory");
  std::vector<StampedPose> out;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    std::istringstream ss(stripComment(line));
    double v[8];
    int n = 0;
    while (n < 8 && ss >> v[n]) ++n;
    if (n == 0) continue;
    if (n != 8) throw parseError(path, lineNo, "expected 8 numbers");
    try {
      out.push_back({v[0], poseFromNumbers(v + 1)});
    } catch (const std::invalid_argument& e) {
      throw parseError(path, lineNo, e.what());
    }
  }
  return out;
}

void saveTrajectory(const std::filesystem::path& path, const std::vector<StampedPose>& trajectory) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "# timestamp tx ty tz qx qy qz qw (body to world)\n";
  char buf[64];
  for (const auto& s : trajectory) {
    std::snprintf(buf, sizeof buf, "%.17g ", s.timestamp);
    out << buf << formatPose(s.bodyToWorld) << "\n";
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace fishmap
