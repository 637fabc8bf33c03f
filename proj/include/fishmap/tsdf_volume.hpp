#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <vector>

#include <Eigen/Geometry>

#include "fishmap/geometry.hpp"
#include "fishmap/image.hpp"

namespace fishmap {

inline constexpr int kBlockSide = 8;
inline constexpr int kBlockVoxels = kBlockSide * kBlockSide * kBlockSide;

struct Voxel {
  /// Signed distance normalized by the truncation distance, in [-1, 1].
  float tsdf = 0;
  /// Number of fused observations, capped; 0 means never observed.
  std::uint16_t weight = 0;
};

struct VoxelBlock {
  Eigen::Vector3i coord = Eigen::Vector3i::Zero();
  std::array<Voxel, kBlockVoxels> voxels{};
  /// Integration passes that updated at least one voxel of the block.
  std::uint32_t observationCount = 0;

  static int index(int i, int j, int k) { return (k * kBlockSide + j) * kBlockSide + i; }
  Voxel& at(int i, int j, int k) { return voxels[std::size_t(index(i, j, k))]; }
  const Voxel& at(int i, int j, int k) const { return voxels[std::size_t(index(i, j, k))]; }
};

struct Vector3iHash {
  std::size_t operator()(const Eigen::Vector3i& v) const noexcept;
};

/// Open-addressed (linear probing) map from block coordinate to a storage
/// index. Grows at 0.75 load; erase uses backward-shift deletion, so probe
/// sequences and iteration order depend only on the operation history.
class BlockHash {
 public:
  BlockHash() { slots_.resize(16); }

  int find(const Eigen::Vector3i& key) const;
  /// Inserts or overwrites.
  void insert(const Eigen::Vector3i& key, int value);
  bool erase(const Eigen::Vector3i& key);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return slots_.size(); }

  template <typename F>
  void forEach(F&& f) const {
    for (const auto& s : slots_) {
      if (s.value >= 0) f(s.key, s.value);
    }
  }

 private:
  struct Slot {
    Eigen::Vector3i key = Eigen::Vector3i::Zero();
    int value = -1;
  };
  std::size_t home(const Eigen::Vector3i& key) const { return Vector3iHash{}(key) & (slots_.size() - 1); }
  void grow();

  std::vector<Slot> slots_;
  std::size_t size_ = 0;
};

struct TsdfConfig {
  double voxelSize = 0.05;
  /// Truncation distance, meters.
  double mu = 0.2;
  int wMax = 100;
  /// Full extent of the vehicle-centered local map.
  Eigen::Vector3d localBoxSize = Eigen::Vector3d(60, 60, 3);

  double blockSize() const { return voxelSize * kBlockSide; }
  void validate() const;
};

/// Sparse TSDF over 8^3 voxel blocks. Blocks inside the local box are active
/// and take part in allocation, integration and raycasting; blocks that leave
/// the box are archived (inactive) with their contents and come back when the
/// box returns. Blocks are never destroyed.
///
/// Writers (allocate, integrate, pruneAndSwap) must be serialized by the
/// caller; raycast and extractPoints only read.
class TsdfVolume {
 public:
  explicit TsdfVolume(TsdfConfig cfg = {}, const Eigen::Vector3d& center = Eigen::Vector3d::Zero());

  /// Walks each valid pixel's ray over [d - mu, d + mu], allocating missing
  /// blocks whose centers lie inside the local box. Rebuilds the visible list
  /// from every active block the segments pass through. Returns new coordinates.
  std::vector<Eigen::Vector3i> allocate(const DepthMap& depth, const FisheyeCamerad& cam, const Posed& worldToCam);

  /// Fuses `depth` into the voxels of the visible blocks (nearest-neighbor
  /// depth lookup, range-based signed distance).
  void integrate(const DepthMap& depth, const FisheyeCamerad& cam, const Posed& worldToCam);

  /// Re-centers the local box; archives active blocks that fell outside and
  /// restores archived blocks that are inside again.
  void pruneAndSwap(const Eigen::Vector3d& vehiclePosition);

  /// Range to the first positive-to-negative crossing along each pixel ray
  /// in [zMin, zMax], over active blocks only.
  DepthMap raycast(const FisheyeCamerad& cam, const Posed& worldToCam, double zMin, double zMax) const;

  /// Zero crossings between axis neighbors of observed voxels, from blocks
  /// (active or archived) seen at least `minBlockObservations` times.
  PointCloud extractPoints(unsigned minBlockObservations, unsigned minVoxelWeight = 0) const;

  /// Eq. 2 style running-average update; returns false (voxel untouched) when eta < -mu.
  static bool updateVoxel(Voxel& voxel, double eta, double mu, int wMax);

  const TsdfConfig& config() const { return cfg_; }
  Eigen::AlignedBox3d localBox() const;
  bool insideLocalBox(const Eigen::Vector3d& p) const;
  Eigen::Vector3d blockCenter(const Eigen::Vector3i& coord) const;
  Eigen::Vector3d voxelCenter(const Eigen::Vector3i& coord, int i, int j, int k) const;
  Eigen::Vector3i blockOf(const Eigen::Vector3d& p) const;

  /// Block with this coordinate, active or archived; nullptr if never allocated.
  const VoxelBlock* findBlock(const Eigen::Vector3i& coord) const;
  VoxelBlock* findBlock(const Eigen::Vector3i& coord);
  bool isActive(const Eigen::Vector3i& coord) const { return active_.find(coord) >= 0; }
  bool isArchived(const Eigen::Vector3i& coord) const { return inactive_.find(coord) >= 0; }

  std::size_t activeCount() const { return active_.size(); }
  std::size_t inactiveCount() const { return inactive_.size(); }
  std::size_t totalBlocks() const { return blocks_.size(); }
  /// Coordinates in allocation order.
  std::vector<Eigen::Vector3i> activeCoords() const;
  std::vector<Eigen::Vector3i> inactiveCoords() const;
  const std::vector<Eigen::Vector3i>& visibleBlocks() const { return visible_; }

  /// Binary snapshot (little-endian): header, then per block
  /// int32 bx by bz, uint32 observation count, 512 x (float32 tsdf, uint16 weight).
  void save(const std::filesystem::path& path) const;
  static TsdfVolume load(const std::filesystem::path& path);

 private:
  int addBlock(const Eigen::Vector3i& coord);
  // Trilinear tsdf at a world point; false where any corner is missing or unobserved.
  bool interpolate(const Eigen::Vector3d& p, float& value) const;
  /// Voxel containing p in an active block, or null.
  const Voxel* nearestVoxel(const Eigen::Vector3d& p) const;

  TsdfConfig cfg_;
  Eigen::Vector3d center_;
  std::deque<VoxelBlock> blocks_;
  std::vector<std::uint8_t> activeFlag_;
  std::vector<std::uint32_t> visibleStamp_;
  std::uint32_t frameStamp_ = 0;
  BlockHash active_;
  BlockHash inactive_;
  std::vector<Eigen::Vector3i> visible_;
};

/// Blocks crossed by the segment from a to b (world meters), in traversal order.
std::vector<Eigen::Vector3i> traverseBlocks(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double blockSize);

}  // namespace fishmap
