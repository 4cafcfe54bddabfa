#include "lvba/global_visibility.hpp"

#include "lvba/errors.hpp"

#include <algorithm>
#include <map>
#include <unordered_set>

namespace lvba {

const std::vector<int>* VisibilityVoxelMap::find(const Vec3& p) const {
  const auto it = voxels.find(voxel_key(p, voxel_size));
  return it == voxels.end() ? nullptr : &it->second;
}

VisibilityVoxelMap build_visibility_map(const std::vector<LidarScan>& scans,
                                        const std::vector<Pose>& lidar_poses,
                                        std::span<const Vec3> camera_positions,
                                        const VisibilityMapConfig& cfg) {
  if (scans.size() != lidar_poses.size()) {
    throw InvalidArgument("build_visibility_map: scan/pose count mismatch");
  }
  VisibilityVoxelMap vmap;
  vmap.voxel_size = cfg.voxel_size;
  std::unordered_set<VoxelKey, VoxelKeyHash> touched;
  for (std::size_t s = 0; s < scans.size(); ++s) {
    const Pose& T = lidar_poses[s];
    std::vector<int> cams;
    for (std::size_t c = 0; c < camera_positions.size(); ++c) {
      if ((camera_positions[c] - T.translation()).norm() <= cfg.proximity) {
        cams.push_back(static_cast<int>(c));
      }
    }
    touched.clear();
    for (const auto& q : scans[s].points) touched.insert(voxel_key(T * q, cfg.voxel_size));
    if (cams.empty()) continue;
    for (const auto& key : touched) {
      auto& list = vmap.voxels[key];
      list.insert(list.end(), cams.begin(), cams.end());
    }
  }
  for (auto& [_, list] : vmap.voxels) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return vmap;
}

std::optional<double> observation_score(const ScenePoint& sp, const Vec3& t_r) {
  const Vec3 d = sp.p - t_r;
  const double d2 = d.squaredNorm();
  if (d2 <= 1e-18) return std::nullopt;
  return sp.n.dot(d) / d2;
}

std::vector<std::size_t> select_global_scene_points(std::vector<ScenePoint>& points,
                                                    const VisibilityVoxelMap& vmap,
                                                    std::span<const Pose> poses) {
  struct Best {
    double score;
    int ref;
    std::size_t index;
  };
  std::map<VoxelKey, Best> best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& sp = points[i];
    const VoxelKey key = voxel_key(sp.p, vmap.voxel_size);
    if (!vmap.voxels.contains(key)) continue;
    const auto s = observation_score(sp, poses[sp.ref_frame].translation());
    if (!s) continue;
    const double a = std::abs(*s);
    auto it = best.find(key);
    if (it == best.end() || a > it->second.score ||
        (a == it->second.score && sp.ref_frame < it->second.ref)) {
      best[key] = {a, sp.ref_frame, i};
    }
  }
  std::vector<std::size_t> out;
  out.reserve(best.size());
  for (const auto& [_, b] : best) out.push_back(b.index);
  std::sort(out.begin(), out.end());
  for (std::size_t i : out) points[i].is_global = true;
  return out;
}

VisibilityRecord determine_global_visibility(const ScenePoint& sp, std::size_t point_index,
                                             const VisibilityVoxelMap& vmap,
                                             std::span<const Pose> poses,
                                             std::span<const Image> images, const Intrinsics& K,
                                             const ScenePointConfig& cfg) {
  VisibilityRecord rec;
  rec.point = point_index;
  const auto* cands = vmap.find(sp.p);
  if (!cands) return rec;
  for (int j : *cands) {
    if (j == sp.ref_frame || j < 0 || static_cast<std::size_t>(j) >= poses.size()) continue;
    if (passes_visibility_checks(sp, j, poses, images, K, cfg)) rec.targets.push_back(j);
  }
  return rec;
}

}  // namespace lvba
