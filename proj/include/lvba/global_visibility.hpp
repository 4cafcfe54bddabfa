#pragma once

#include "lvba/lidar_ba.hpp"
#include "lvba/scene_points.hpp"
#include "lvba/voxel.hpp"

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace lvba {

struct VisibilityMapConfig {
  double voxel_size = 0.5;
  double proximity = 1.0;  // camera-to-scan-origin distance, meters
};

/// Voxel -> sorted camera frame indices that can see the voxel, inferred from
/// which LiDAR scan origins measured points in it.
struct VisibilityVoxelMap {
  double voxel_size = 0.5;
  std::unordered_map<VoxelKey, std::vector<int>, VoxelKeyHash> voxels;

  const std::vector<int>* find(const Vec3& p) const;
};

VisibilityVoxelMap build_visibility_map(const std::vector<LidarScan>& scans,
                                        const std::vector<Pose>& lidar_poses,
                                        std::span<const Vec3> camera_positions,
                                        const VisibilityMapConfig& cfg);

/// n^T (p - t_r) / |p - t_r|^2; std::nullopt when p coincides with t_r.
std::optional<double> observation_score(const ScenePoint& sp, const Vec3& t_r);

/// Marks, per voxel of the map, the point with the largest |score| with
/// respect to its own reference frame as global (ties go to the lower
/// ref_frame, then the lower index). Returns the indices of marked points in
/// ascending order. Points whose voxel is absent from the map are ignored.
std::vector<std::size_t> select_global_scene_points(std::vector<ScenePoint>& points,
                                                    const VisibilityVoxelMap& vmap,
                                                    std::span<const Pose> poses);

/// Targets among the frames stored in the point's voxel (reference frame
/// excluded) that pass the same checks as local visibility. No ray casting.
VisibilityRecord determine_global_visibility(const ScenePoint& sp, std::size_t point_index,
                                             const VisibilityVoxelMap& vmap,
                                             std::span<const Pose> poses,
                                             std::span<const Image> images, const Intrinsics& K,
                                             const ScenePointConfig& cfg);

}  // namespace lvba
