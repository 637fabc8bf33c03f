#include "fishmap/image_io.hpp"
#include <algorithm>
#include <cctype>
#include <cstdio>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fishmap {
namespace {

std::runtime_error ioError(const std::filesystem::path& path, const std::string& what) {
  return std::runtime_error(path.string() + ": " + what);
}

std::ifstream openIn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ioError(path, "cannot open for reading");
  return in;
}

std::ofstream openOut(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ioError(path, "cannot open for writing");
  return out;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string headerToken(std::istream& in) {
  std::string token;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(c);
  }
  return token;
}

float floatFromLe(const unsigned char* b) {
  std::uint32_t u = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
                    (std::uint32_t(b[3]) << 24);
  return std::bit_cast<float>(u);
}

void floatToLe(float v, unsigned char* b) {
  const auto u = std::bit_cast<std::uint32_t>(v);
  b[0] = u & 0xff;
  b[1] = (u >> 8) & 0xff;
  b[2] = (u >> 16) & 0xff;
  b[3] = (u >> 24) & 0xff;
}

}  // namespace

Image readPgm(const std::filesystem::path& path) {
  auto in = openIn(path);
  if (headerToken(in) != "P5") throw ioError(path, "not a binary PGM");
  const int width = std::stoi(headerToken(in));
  const int height = std::stoi(headerToken(in));
  const int maxval = std::stoi(headerToken(in));
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) throw ioError(path, "unsupported PGM header");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw ioError(path, "truncated PGM data");
  Image image(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) image(r, c) = float(bytes[std::size_t(r) * width + c]) / float(maxval);
  }
  return image;
}

void writePgm(const std::filesystem::path& path, const Image& image) {
  auto out = openOut(path);
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(image.size()));
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      const float v = std::clamp(image(r, c), 0.0f, 1.0f);
      bytes[std::size_t(r * image.cols() + c)] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ioError(path, "write failed");
}

Raster<float> readPfm(const std::filesystem::path& path) {
  auto in = openIn(path);
  if (headerToken(in) != "Pf") throw ioError(path, "not a single-channel PFM");
  const int width = std::stoi(headerToken(in));
  const int height = std::stoi(headerToken(in));
  const double scale = std::stod(headerToken(in));
  if (width <= 0 || height <= 0) throw ioError(path, "bad PFM dimensions");
  if (scale >= 0) throw ioError(path, "big-endian PFM is not supported");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw ioError(path, "truncated PFM data");
  Raster<float> values(height, width);
  for (int r = 0; r < height; ++r) {
    const int fileRow = height - 1 - r;
    for (int c = 0; c < width; ++c) {
      values(r, c) = floatFromLe(&bytes[(std::size_t(fileRow) * width + c) * 4]);
    }
  }
  return values;
}

void writePfm(const std::filesystem::path& path, const Raster<float>& values) {
  auto out = openOut(path);
  out << "Pf\n" << values.cols() << ' ' << values.rows() << "\n-1.0\n";
  const auto width = values.cols();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(values.size()) * 4);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    const auto fileRow = values.rows() - 1 - r;
    for (Eigen::Index c = 0; c < width; ++c) floatToLe(values(r, c), &bytes[std::size_t(fileRow * width + c) * 4]);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ioError(path, "write failed");
}

void writePly(const std::filesystem::path& path, const PointCloud& cloud, PlyFormat format) {
  const bool withWeight = !cloud.weights.empty();
  if (withWeight && cloud.weights.size() != cloud.points.size()) {
    throw ioError(path, "weight count does not match point count");
  }
  auto out = openOut(path);
  out << "ply\nformat " << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
  out << "element vertex " << cloud.points.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (withWeight) out << "property float weight\n";
  out << "end_header\n";
  if (format == PlyFormat::Ascii) {
    char line[128];
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      const auto& p = cloud.points[i];
      int n = withWeight ? std::snprintf(line, sizeof line, "%.9g %.9g %.9g %.9g\n", p.x(), p.y(), p.z(), cloud.weights[i])
                         : std::snprintf(line, sizeof line, "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
      out.write(line, n);
    }
  } else {
    const std::size_t stride = withWeight ? 16 : 12;
    std::vector<unsigned char> bytes(cloud.points.size() * stride);
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      unsigned char* b = &bytes[i * stride];
      for (int k = 0; k < 3; ++k) floatToLe(cloud.points[i][k], b + 4 * k);
      if (withWeight) floatToLe(cloud.weights[i], b + 12);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw ioError(path, "write failed");
}

PointCloud readPly(const std::filesystem::path& path) {
  auto in = openIn(path);
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw ioError(path, "not a PLY file");
  bool binary = false;
  std::size_t count = 0;
  std::vector<std::string> properties;
  bool inVertex = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt != "ascii") {
        throw ioError(path, "unsupported PLY format " + fmt);
      }
    } else if (key == "element") {
      std::string name;
      ss >> name;
      inVertex = name == "vertex";
      if (inVertex) ss >> count;
    } else if (key == "property" && inVertex) {
      std::string type, name;
      ss >> type >> name;
      if (type != "float") throw ioError(path, "only float vertex properties are supported");
      properties.push_back(name);
    } else if (key == "end_header") {
      break;
    }
  }
  if (properties.size() < 3 || properties[0] != "x" || properties[1] != "y" || properties[2] != "z") {
    throw ioError(path, "vertex properties must start with x y z");
  }
  const bool withWeight = properties.size() >= 4 && properties[3] == "weight";
  PointCloud cloud;
  cloud.points.resize(count);
  if (withWeight) cloud.weights.resize(count);
  const std::size_t nprop = properties.size();
  if (binary) {
    std::vector<unsigned char> bytes(count * nprop * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw ioError(path, "truncated PLY data");
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned char* b = &bytes[i * nprop * 4];
      cloud.points[i] = Eigen::Vector3f(floatFromLe(b), floatFromLe(b + 4), floatFromLe(b + 8));
      if (withWeight) cloud.weights[i] = floatFromLe(b + 12);
    }
  } else {
    std::vector<float> v(nprop);
    for (std::size_t i = 0; i < count; ++i) {
      for (auto& x : v) in >> x;
      if (!in) throw ioError(path, "truncated PLY data at vertex " + std::to_string(i));
      cloud.points[i] = Eigen::Vector3f(v[0], v[1], v[2]);
      if (withWeight) cloud.weights[i] = v[3];
    }
  }
  return cloud;
}

}  // namespace fishmap
