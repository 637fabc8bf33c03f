#pragma once

#include <filesystem>

#include "fishmap/image.hpp"

namespace fishmap {

/// 8-bit binary PGM (P5); intensities are scaled to [0, 1].
Image readPgm(const std::filesystem::path& path);
void writePgm(const std::filesystem::path& path, const Image& image);

/// Single-channel little-endian PFM ("Pf", negative scale). Rows are stored bottom-up.
Raster<float> readPfm(const std::filesystem::path& path);
void writePfm(const std::filesystem::path& path, const Raster<float>& values);

enum class PlyFormat { Ascii, BinaryLittleEndian };

/// Vertex-only PLY with float x y z and an optional float weight.
void writePly(const std::filesystem::path& path, const PointCloud& cloud, PlyFormat format = PlyFormat::BinaryLittleEndian);
PointCloud readPly(const std::filesystem::path& path);

}  // namespace fishmap
