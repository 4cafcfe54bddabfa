#pragma once

#include "lvba/global_visibility.hpp"
#include "lvba/photometric_ba.hpp"
#include "lvba/synthetic_world.hpp"

#include <vector>

namespace lvba::test {

/// Ground-truth scans, images and visual BA inputs of a synthetic scene.
struct Fixture {
  synth::SceneSpec scene;
  std::vector<LidarScan> scans;
  std::vector<Image> images;
  std::vector<CameraState> truth;
  VisualBaInputs inputs;
};

inline Fixture make_fixture(synth::SceneSpec scene, int levels, double lidar_noise = 0.0,
                            int feature_stride = 1) {
  Fixture fx;
  fx.scene = std::move(scene);
  const auto& s = fx.scene;
  std::vector<Vec3> cams;
  for (std::size_t f = 0; f < s.frame_count(); ++f) {
    auto scan = synth::simulate_lidar(s, f, lidar_noise);
    scan.init_pose = s.trajectory[f];
    fx.scans.push_back(std::move(scan));
    fx.images.push_back(synth::render_ground_truth(s, f));
    fx.truth.push_back({s.camera_pose(f), s.exposures[f]});
    cams.push_back(fx.truth.back().pose.translation());
    fx.inputs.pyramids.push_back(build_pyramid(fx.images.back(), s.intrinsics, levels));
    fx.inputs.scan_positions.push_back(s.trajectory[f].translation());
  }
  const PlaneVoxelParams map_params;
  const auto map = build_plane_voxel_map(fx.scans, s.trajectory, map_params);
  fx.inputs.features = extract_plane_features(fx.scans, s.trajectory, map, feature_stride);
  fx.inputs.support = plane_support(fx.inputs.features, map_params.voxel_size);
  fx.inputs.vmap = build_visibility_map(fx.scans, s.trajectory, cams, VisibilityMapConfig{});
  return fx;
}

}  // namespace lvba::test
