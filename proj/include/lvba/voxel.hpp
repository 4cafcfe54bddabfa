#pragma once

#include "lvba/geometry.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>

namespace lvba {

struct VoxelKey {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  bool operator==(const VoxelKey&) const = default;
  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    // Spatial hash over the three axes.
    return static_cast<std::size_t>(k.x * 73856093LL ^ k.y * 19349669LL ^ k.z * 83492791LL);
  }
};

/// floor(p / size) per axis; floor keeps negative coordinates in the right cell.
inline VoxelKey voxel_key(const Vec3& p, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
}

}  // namespace lvba
