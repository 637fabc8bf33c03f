#include "fishmap/tsdf_volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace fishmap {
namespace {

int floorDiv(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

constexpr char kSnapshotMagic[8] = {'F', 'M', 'T', 'S', 'D', 'F', '0', '1'};

template <typename T>
void putLe(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
  const U u = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((u >> (8 * i)) & 0xff));
}

template <typename T>
T getLe(const unsigned char*& p) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= U(p[i]) << (8 * i);
  p += sizeof(T);
  return std::bit_cast<T>(u);
}

}  // namespace

std::size_t Vector3iHash::operator()(const Eigen::Vector3i& v) const noexcept {
  std::uint64_t h = static_cast<std::uint32_t>(v.x()) * 0x9E3779B185EBCA87ULL;
  h ^= static_cast<std::uint32_t>(v.y()) * 0xC2B2AE3D27D4EB4FULL;
  h ^= static_cast<std::uint32_t>(v.z()) * 0x165667B19E3779F9ULL;
  h ^= h >> 29;
  h *= 0xBF58476D1CE4E5B9ULL;
  h ^= h >> 32;
  return static_cast<std::size_t>(h);
}

int BlockHash::find(const Eigen::Vector3i& key) const {
  const std::size_t mask = slots_.size() - 1;
  for (std::size_t i = home(key);; i = (i + 1) & mask) {
    const Slot& s = slots_[i];
    if (s.value < 0) return -1;
    if (s.key == key) return s.value;
  }
}

void BlockHash::insert(const Eigen::Vector3i& key, int value) {
  if ((size_ + 1) * 4 > slots_.size() * 3) grow();
  const std::size_t mask = slots_.size() - 1;
  for (std::size_t i = home(key);; i = (i + 1) & mask) {
    Slot& s = slots_[i];
    if (s.value < 0) {
      s.key = key;
      s.value = value;
      ++size_;
      return;
    }
    if (s.key == key) {
      s.value = value;
      return;
    }
  }
}

bool BlockHash::erase(const Eigen::Vector3i& key) {
  const std::size_t mask = slots_.size() - 1;
  std::size_t i = home(key);
  for (;; i = (i + 1) & mask) {
    if (slots_[i].value < 0) return false;
    if (slots_[i].key == key) break;
  }
  // backward-shift deletion keeps every remaining probe chain intact
  std::size_t hole = i;
  for (std::size_t j = (hole + 1) & mask; slots_[j].value >= 0; j = (j + 1) & mask) {
    const std::size_t h = home(slots_[j].key);
    const bool movable = hole <= j ? (h <= hole || h > j) : (h <= hole && h > j);
    if (movable) {
      slots_[hole] = slots_[j];
      hole = j;
    }
  }
  slots_[hole] = Slot{};
  --size_;
  return true;
}

void BlockHash::grow() {
  std::vector<Slot> old = std::move(slots_);
  slots_.assign(old.size() * 2, Slot{});
  size_ = 0;
  for (const auto& s : old) {
    if (s.value >= 0) insert(s.key, s.value);
  }
}

void TsdfConfig::validate() const {
  if (!(voxelSize > 0)) throw std::invalid_argument("TsdfConfig: voxel size must be positive");
  if (!(mu > 0)) throw std::invalid_argument("TsdfConfig: truncation distance must be positive");
  if (wMax < 1 || wMax > 65535) throw std::invalid_argument("TsdfConfig: w_max must lie in [1, 65535]");
  if (!(localBoxSize.minCoeff() > 0)) throw std::invalid_argument("TsdfConfig: empty local box");
}

std::vector<Eigen::Vector3i> traverseBlocks(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double blockSize) {
  std::vector<Eigen::Vector3i> out;
  const Eigen::Vector3d p0 = a / blockSize, p1 = b / blockSize;
  Eigen::Vector3i cell = p0.array().floor().cast<int>();
  const Eigen::Vector3i last = p1.array().floor().cast<int>();
  const Eigen::Vector3d dir = p1 - p0;
  Eigen::Vector3i step;
  Eigen::Vector3d tMax, tDelta;
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (dir[k] > 0) {
      step[k] = 1;
      tMax[k] = (std::floor(p0[k]) + 1 - p0[k]) / dir[k];
      tDelta[k] = 1 / dir[k];
    } else if (dir[k] < 0) {
      step[k] = -1;
      tMax[k] = (p0[k] - std::floor(p0[k])) / -dir[k];
      tDelta[k] = -1 / dir[k];
    } else {
      step[k] = 0;
      tMax[k] = inf;
      tDelta[k] = inf;
    }
  }
  out.push_back(cell);
  const int maxSteps = (last - cell).cwiseAbs().sum() + 3;
  for (int n = 0; n < maxSteps && cell != last; ++n) {
    int axis = 0;
    if (tMax[1] < tMax[axis]) axis = 1;
    if (tMax[2] < tMax[axis]) axis = 2;
    if (tMax[axis] > 1) break;
    cell[axis] += step[axis];
    tMax[axis] += tDelta[axis];
    out.push_back(cell);
  }
  return out;
}

TsdfVolume::TsdfVolume(TsdfConfig cfg, const Eigen::Vector3d& center) : cfg_(std::move(cfg)), center_(center) {
  cfg_.validate();
}

Eigen::AlignedBox3d TsdfVolume::localBox() const {
  const Eigen::Vector3d half = cfg_.localBoxSize / 2;
  return {center_ - half, center_ + half};
}

bool TsdfVolume::insideLocalBox(const Eigen::Vector3d& p) const {
  return ((p - center_).cwiseAbs().array() <= (cfg_.localBoxSize / 2).array()).all();
}

Eigen::Vector3d TsdfVolume::blockCenter(const Eigen::Vector3i& coord) const {
  return (coord.cast<double>() + Eigen::Vector3d::Constant(0.5)) * cfg_.blockSize();
}

Eigen::Vector3d TsdfVolume::voxelCenter(const Eigen::Vector3i& coord, int i, int j, int k) const {
  return ((coord * kBlockSide + Eigen::Vector3i(i, j, k)).cast<double>() + Eigen::Vector3d::Constant(0.5)) *
         cfg_.voxelSize;
}

Eigen::Vector3i TsdfVolume::blockOf(const Eigen::Vector3d& p) const {
  return (p / cfg_.blockSize()).array().floor().cast<int>();
}

const VoxelBlock* TsdfVolume::findBlock(const Eigen::Vector3i& coord) const {
  int idx = active_.find(coord);
  if (idx < 0) idx = inactive_.find(coord);
  return idx < 0 ? nullptr : &blocks_[std::size_t(idx)];
}

VoxelBlock* TsdfVolume::findBlock(const Eigen::Vector3i& coord) {
  return const_cast<VoxelBlock*>(std::as_const(*this).findBlock(coord));
}

int TsdfVolume::addBlock(const Eigen::Vector3i& coord) {
  const int idx = static_cast<int>(blocks_.size());
  blocks_.emplace_back();
  blocks_.back().coord = coord;
  activeFlag_.push_back(1);
  visibleStamp_.push_back(0);
  active_.insert(coord, idx);
  return idx;
}

std::vector<Eigen::Vector3i> TsdfVolume::allocate(const DepthMap& depth, const FisheyeCamerad& cam,
                                                  const Posed& worldToCam) {
  if (depth.width() != cam.width || depth.height() != cam.height) {
    throw std::invalid_argument("TsdfVolume::allocate: depth map does not match the camera");
  }
  const Posed camToWorld = worldToCam.inverse();
  const Eigen::Vector3d origin = camToWorld.translation();
  const Eigen::Matrix3d rot = camToWorld.rotation();
  const int W = depth.width(), H = depth.height();

  // per-row block candidates, merged in row order below
  std::vector<std::vector<Eigen::Vector3i>> rowBlocks(static_cast<std::size_t>(H));
#pragma omp parallel for schedule(dynamic, 8)
  for (int r = 0; r < H; ++r) {
    auto& list = rowBlocks[std::size_t(r)];
    for (int c = 0; c < W; ++c) {
      const double d = depth.depth(r, c);
      if (!(d > 0)) continue;
      const auto ray = pixelRay(cam, c, r);
      if (!ray) continue;
      const Eigen::Vector3d dir = rot * *ray;
      const double t0 = std::max(0.0, d - cfg_.mu), t1 = d + cfg_.mu;
      for (const auto& b : traverseBlocks(origin + t0 * dir, origin + t1 * dir, cfg_.blockSize())) {
        if (list.empty() || list.back() != b) list.push_back(b);
      }
    }
  }

  ++frameStamp_;
  visible_.clear();
  std::vector<Eigen::Vector3i> created;
  for (const auto& list : rowBlocks) {
    for (const auto& b : list) {
      int idx = active_.find(b);
      if (idx < 0) {
        if (!insideLocalBox(blockCenter(b))) continue;
        const int archived = inactive_.find(b);
        if (archived >= 0) {
          inactive_.erase(b);
          active_.insert(b, archived);
          activeFlag_[std::size_t(archived)] = 1;
          idx = archived;
        } else {
          idx = addBlock(b);
          created.push_back(b);
        }
      }
      if (visibleStamp_[std::size_t(idx)] != frameStamp_) {
        visibleStamp_[std::size_t(idx)] = frameStamp_;
        visible_.push_back(b);
      }
    }
  }
  return created;
}

bool TsdfVolume::updateVoxel(Voxel& voxel, double eta, double mu, int wMax) {
  if (eta < -mu) return false;
  const double sample = std::min(1.0, eta / mu);
  const double w = voxel.weight;
  voxel.tsdf = static_cast<float>(std::clamp((w * voxel.tsdf + sample) / (w + 1), -1.0, 1.0));
  voxel.weight = static_cast<std::uint16_t>(std::min<int>(voxel.weight + 1, wMax));
  return true;
}

void TsdfVolume::integrate(const DepthMap& depth, const FisheyeCamerad& cam, const Posed& worldToCam) {
  if (depth.width() != cam.width || depth.height() != cam.height) {
    throw std::invalid_argument("TsdfVolume::integrate: depth map does not match the camera");
  }
  const Eigen::Matrix3d R = worldToCam.rotation();
  const Eigen::Vector3d t = worldToCam.translation();
  const int nVisible = static_cast<int>(visible_.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (int b = 0; b < nVisible; ++b) {
    VoxelBlock& block = blocks_[std::size_t(active_.find(visible_[std::size_t(b)]))];
    bool touched = false;
    for (int k = 0; k < kBlockSide; ++k) {
      for (int j = 0; j < kBlockSide; ++j) {
        for (int i = 0; i < kBlockSide; ++i) {
          const Eigen::Vector3d Xd = R * voxelCenter(block.coord, i, j, k) + t;
          const auto px = project(cam, Xd);
          if (!px) continue;
          const float d = depth.depth(static_cast<int>(px->y()), static_cast<int>(px->x()));
          if (!(d > 0)) continue;
          touched |= updateVoxel(block.at(i, j, k), double(d) - Xd.norm(), cfg_.mu, cfg_.wMax);
        }
      }
    }
    if (touched) ++block.observationCount;
  }
}

void TsdfVolume::pruneAndSwap(const Eigen::Vector3d& vehiclePosition) {
  center_ = vehiclePosition;
  for (std::size_t idx = 0; idx < blocks_.size(); ++idx) {
    const Eigen::Vector3i& coord = blocks_[idx].coord;
    const bool inside = insideLocalBox(blockCenter(coord));
    if (activeFlag_[idx] && !inside) {
      active_.erase(coord);
      inactive_.insert(coord, static_cast<int>(idx));
      activeFlag_[idx] = 0;
    } else if (!activeFlag_[idx] && inside) {
      inactive_.erase(coord);
      active_.insert(coord, static_cast<int>(idx));
      activeFlag_[idx] = 1;
    }
  }
  // archived blocks cannot be visible
  std::erase_if(visible_, [this](const Eigen::Vector3i& c) { return active_.find(c) < 0; });
}

bool TsdfVolume::interpolate(const Eigen::Vector3d& p, float& value) const {
  const Eigen::Vector3d g = p / cfg_.voxelSize - Eigen::Vector3d::Constant(0.5);
  const Eigen::Vector3d base = g.array().floor();
  const Eigen::Vector3d f = g - base;
  const Eigen::Vector3i b = base.cast<int>();
  float c[8];
  const VoxelBlock* cached = nullptr;
  Eigen::Vector3i cachedCoord(std::numeric_limits<int>::min(), 0, 0);
  for (int n = 0; n < 8; ++n) {
    const Eigen::Vector3i v = b + Eigen::Vector3i(n & 1, (n >> 1) & 1, (n >> 2) & 1);
    const Eigen::Vector3i bc(floorDiv(v.x(), kBlockSide), floorDiv(v.y(), kBlockSide), floorDiv(v.z(), kBlockSide));
    if (bc != cachedCoord) {
      const int idx = active_.find(bc);
      cached = idx < 0 ? nullptr : &blocks_[std::size_t(idx)];
      cachedCoord = bc;
    }
    if (!cached) return false;
    const Eigen::Vector3i l = v - bc * kBlockSide;
    const Voxel& vox = cached->at(l.x(), l.y(), l.z());
    if (vox.weight == 0) return false;
    c[n] = vox.tsdf;
  }
  const double fx = f.x(), fy = f.y(), fz = f.z();
  const double c00 = c[0] + fx * (c[1] - c[0]), c10 = c[2] + fx * (c[3] - c[2]);
  const double c01 = c[4] + fx * (c[5] - c[4]), c11 = c[6] + fx * (c[7] - c[6]);
  const double c0 = c00 + fy * (c10 - c00), c1 = c01 + fy * (c11 - c01);
  value = static_cast<float>(c0 + fz * (c1 - c0));
  return true;
}

DepthMap TsdfVolume::raycast(const FisheyeCamerad& cam, const Posed& worldToCam, double zMin, double zMax) const {
  DepthMap out(cam.width, cam.height);
  out.bestCost.setZero();
  const Posed camToWorld = worldToCam.inverse();
  const Eigen::Vector3d origin = camToWorld.translation();
  const Eigen::Matrix3d rot = camToWorld.rotation();
  const double fine = std::min(0.5 * cfg_.voxelSize, 0.75 * cfg_.mu);
  const double coarse = 0.5 * cfg_.blockSize();
#pragma omp parallel for schedule(dynamic, 4)
  for (int r = 0; r < cam.height; ++r) {
    for (int c = 0; c < cam.width; ++c) {
      const auto ray = pixelRay(cam, c, r);
      if (!ray) continue;
      const Eigen::Vector3d dir = rot * *ray;
      bool havePrev = false;
      float prev = 0;
      double prevT = 0;
      for (double t = zMin; t <= zMax;) {
        const Eigen::Vector3d p = origin + t * dir;
        const Voxel* v = nearestVoxel(p);
        if (!v) {
          havePrev = false;
          t += coarse;
          continue;
        }
        // trilinear where all corners are observed, else the containing voxel
        float cur = v->tsdf;
        if (!interpolate(p, cur) && v->weight == 0) {
          havePrev = false;
          t += fine;
          continue;
        }
        if (havePrev && prev > 0 && cur < 0) {
          out.depth(r, c) = static_cast<float>(prevT + (t - prevT) * prev / (prev - cur));
          break;
        }
        havePrev = true;
        prev = cur;
        prevT = t;
        t += fine;
      }
    }
  }
  return out;
}

const Voxel* TsdfVolume::nearestVoxel(const Eigen::Vector3d& p) const {
  const Eigen::Vector3i v = (p / cfg_.voxelSize).array().floor().cast<int>();
  const Eigen::Vector3i bc(floorDiv(v.x(), kBlockSide), floorDiv(v.y(), kBlockSide), floorDiv(v.z(), kBlockSide));
  const int idx = active_.find(bc);
  if (idx < 0) return nullptr;
  const Eigen::Vector3i l = v - bc * kBlockSide;
  return &blocks_[std::size_t(idx)].at(l.x(), l.y(), l.z());
}

PointCloud TsdfVolume::extractPoints(unsigned minBlockObservations, unsigned minVoxelWeight) const {
  const unsigned minWeight = std::max(1u, minVoxelWeight);
  auto usable = [&](const VoxelBlock* blk) { return blk && blk->observationCount >= minBlockObservations; };
  const int nBlocks = static_cast<int>(blocks_.size());
  std::vector<PointCloud> perBlock(blocks_.size());
#pragma omp parallel for schedule(dynamic, 32)
  for (int bi = 0; bi < nBlocks; ++bi) {
    const VoxelBlock& block = blocks_[std::size_t(bi)];
    if (!usable(&block)) continue;
    PointCloud& out = perBlock[std::size_t(bi)];
    for (int k = 0; k < kBlockSide; ++k) {
      for (int j = 0; j < kBlockSide; ++j) {
        for (int i = 0; i < kBlockSide; ++i) {
          const Voxel& a = block.at(i, j, k);
          if (a.weight < minWeight) continue;
          for (int axis = 0; axis < 3; ++axis) {
            Eigen::Vector3i l(i, j, k);
            l[axis] += 1;
            const VoxelBlock* nb = &block;
            if (l[axis] == kBlockSide) {
              Eigen::Vector3i coord = block.coord;
              coord[axis] += 1;
              nb = findBlock(coord);
              if (!usable(nb)) continue;
              l[axis] = 0;
            }
            const Voxel& b = nb->at(l.x(), l.y(), l.z());
            if (b.weight < minWeight) continue;
            if (!((a.tsdf > 0 && b.tsdf < 0) || (a.tsdf < 0 && b.tsdf > 0))) continue;
            const double s = double(a.tsdf) / (double(a.tsdf) - double(b.tsdf));
            Eigen::Vector3d pa = voxelCenter(block.coord, i, j, k);
            pa[axis] += s * cfg_.voxelSize;
            out.points.push_back(pa.cast<float>());
            out.weights.push_back(static_cast<float>(std::min(a.weight, b.weight)));
          }
        }
      }
    }
  }
  PointCloud cloud;
  for (auto& part : perBlock) {
    cloud.points.insert(cloud.points.end(), part.points.begin(), part.points.end());
    cloud.weights.insert(cloud.weights.end(), part.weights.begin(), part.weights.end());
  }
  return cloud;
}

std::vector<Eigen::Vector3i> TsdfVolume::activeCoords() const {
  std::vector<Eigen::Vector3i> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (activeFlag_[i]) out.push_back(blocks_[i].coord);
  }
  return out;
}

std::vector<Eigen::Vector3i> TsdfVolume::inactiveCoords() const {
  std::vector<Eigen::Vector3i> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (!activeFlag_[i]) out.push_back(blocks_[i].coord);
  }
  return out;
}

void TsdfVolume::save(const std::filesystem::path& path) const {
  std::vector<unsigned char> bytes(kSnapshotMagic, kSnapshotMagic + 8);
  putLe(bytes, cfg_.voxelSize);
  putLe(bytes, cfg_.mu);
  putLe(bytes, static_cast<std::uint32_t>(cfg_.wMax));
  for (int k = 0; k < 3; ++k) putLe(bytes, cfg_.localBoxSize[k]);
  for (int k = 0; k < 3; ++k) putLe(bytes, center_[k]);
  putLe(bytes, static_cast<std::uint64_t>(blocks_.size()));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    for (int k = 0; k < 3; ++k) putLe(bytes, static_cast<std::int32_t>(b.coord[k]));
    putLe(bytes, b.observationCount);
    for (const auto& v : b.voxels) {
      putLe(bytes, v.tsdf);
      putLe(bytes, v.weight);
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(path.string() + ": cannot write volume snapshot");
}

TsdfVolume TsdfVolume::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open volume snapshot");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t headerSize = 8 + 8 + 8 + 4 + 24 + 24 + 8;
  constexpr std::size_t blockBytes = 16 + kBlockVoxels * 6;
  if (bytes.size() < headerSize || std::memcmp(bytes.data(), kSnapshotMagic, 8) != 0) {
    throw std::runtime_error(path.string() + ": not a volume snapshot");
  }
  const unsigned char* p = bytes.data() + 8;
  TsdfConfig cfg;
  cfg.voxelSize = getLe<double>(p);
  cfg.mu = getLe<double>(p);
  cfg.wMax = static_cast<int>(getLe<std::uint32_t>(p));
  for (int k = 0; k < 3; ++k) cfg.localBoxSize[k] = getLe<double>(p);
  Eigen::Vector3d center;
  for (int k = 0; k < 3; ++k) center[k] = getLe<double>(p);
  const auto count = getLe<std::uint64_t>(p);
  if (bytes.size() != headerSize + count * blockBytes) throw std::runtime_error(path.string() + ": truncated snapshot");
  TsdfVolume vol(cfg, center);
  for (std::uint64_t n = 0; n < count; ++n) {
    Eigen::Vector3i coord;
    for (int k = 0; k < 3; ++k) coord[k] = getLe<std::int32_t>(p);
    const int idx = vol.addBlock(coord);
    VoxelBlock& b = vol.blocks_[std::size_t(idx)];
    b.observationCount = getLe<std::uint32_t>(p);
    for (auto& v : b.voxels) {
      v.tsdf = getLe<float>(p);
      v.weight = getLe<std::uint16_t>(p);
    }
  }
  vol.pruneAndSwap(center);
  return vol;
}

}  // namespace fishmap
