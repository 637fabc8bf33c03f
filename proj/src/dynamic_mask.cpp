#include "fishmap/dynamic_mask.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace fishmap {

DepthMap applyMasks(const DepthMap& depth, const std::vector<DetectionBox>& boxes, const MaskConfig& cfg) {
  DepthMap out = depth;
  for (const auto& box : boxes) {
    if (box.w <= 0 || box.h <= 0 || box.score < cfg.minScore) continue;
    if (!cfg.classes.empty() && std::find(cfg.classes.begin(), cfg.classes.end(), box.classId) == cfg.classes.end()) {
      continue;
    }
    const int x0 = std::max(0, box.x - cfg.dilationPx);
    const int y0 = std::max(0, box.y - cfg.dilationPx);
    const int x1 = std::min(depth.width(), box.x + box.w + cfg.dilationPx);
    const int y1 = std::min(depth.height(), box.y + box.h + cfg.dilationPx);
    if (x1 <= x0 || y1 <= y0) continue;
    out.depth.block(y0, x0, y1 - y0, x1 - x0).setZero();
  }
  return out;
}

DetectionsByFrame loadDetections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open detections");
  DetectionsByFrame out;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(f);
    if (fields.empty()) continue;
    if (fields.size() != 6 && fields.size() != 7) {
      throw DetectionParseError(path.string() + ":" + std::to_string(lineNo) + ": expected 6 or 7 fields", lineNo);
    }
    DetectionBox box;
    try {
      std::size_t used = 0;
      auto toInt = [&](const std::string& s) {
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      box.frameId = toInt(fields[0]);
      box.classId = toInt(fields[1]);
      box.x = toInt(fields[2]);
      box.y = toInt(fields[3]);
      box.w = toInt(fields[4]);
      box.h = toInt(fields[5]);
      if (fields.size() == 7) {
        box.score = std::stod(fields[6], &used);
        if (used != fields[6].size()) throw std::invalid_argument(fields[6]);
      }
    } catch (const std::logic_error&) {
      throw DetectionParseError(path.string() + ":" + std::to_string(lineNo) + ": malformed detection", lineNo);
    }
    out[box.frameId].push_back(box);
  }
  return out;
}

void saveDetections(const std::filesystem::path& path, const DetectionsByFrame& detections) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  char buf[160];
  for (const auto& [frame, boxes] : detections) {
    for (const auto& b : boxes) {
      std::snprintf(buf, sizeof buf, "%d %d %d %d %d %d %.6g\n", frame, b.classId, b.x, b.y, b.w, b.h, b.score);
      out << buf;
    }
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace fishmap
