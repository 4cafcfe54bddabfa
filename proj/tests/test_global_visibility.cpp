#include "doctest.h"

#include "lvba/global_visibility.hpp"
#include "lvba/synthetic_world.hpp"

using namespace lvba;

namespace {

ScenePoint point_at(const Vec3& p, const Vec3& n, int ref) {
  ScenePoint sp;
  sp.p = p;
  sp.n = n;
  sp.ref_frame = ref;
  return sp;
}

}  // namespace

TEST_CASE("visibility map from a single scan") {
  LidarScan scan;
  for (int i = 0; i < 20; ++i) scan.points.emplace_back(0.3 * i - 3, 1.0, 2.0);
  const std::vector<Pose> poses = {Pose()};
  const std::vector<Vec3> at_origin = {Vec3::Zero()};
  const auto vmap = build_visibility_map({scan}, poses, at_origin, VisibilityMapConfig{});
  CHECK_FALSE(vmap.voxels.empty());
  for (const auto& [_, cams] : vmap.voxels) CHECK(cams == std::vector<int>{0});
  REQUIRE(vmap.find(Vec3(0.0, 1.0, 2.0)));
  CHECK_FALSE(vmap.find(Vec3(0.0, -5.0, 2.0)));

  const std::vector<Vec3> far = {Vec3(5, 0, 0)};
  CHECK(build_visibility_map({scan}, poses, far, VisibilityMapConfig{}).voxels.empty());
}

TEST_CASE("two rooms keep their cameras apart") {
  const auto scene = synth::two_room_scene(6, 2);
  std::vector<LidarScan> scans;
  std::vector<Vec3> cams;
  for (std::size_t f = 0; f < scene.frame_count(); ++f) {
    scans.push_back(synth::simulate_lidar(scene, f, 0.0));
    cams.push_back(scene.camera_pose(f).translation());
  }
  const auto vmap = build_visibility_map(scans, scene.trajectory, cams, VisibilityMapConfig{});
  int a = 0, b = 0;
  for (const auto& [key, list] : vmap.voxels) {
    // Voxels clear of the dividing wall at x = 0.
    if (key.x <= -2) {
      ++a;
      for (const int c : list) CHECK(c < 6);
    } else if (key.x >= 1) {
      ++b;
      for (const int c : list) CHECK(c >= 6);
    }
  }
  CHECK(a > 100);
  CHECK(b > 100);
}

TEST_CASE("observation score") {
  const Vec3 n(0, 0, 1);
  CHECK(*observation_score(point_at(n, n, 0), Vec3::Zero()) == doctest::Approx(1.0));
  CHECK(*observation_score(point_at(2 * n, n, 0), Vec3::Zero()) == doctest::Approx(0.5));
  CHECK(*observation_score(point_at(Vec3(1, 0, 0), n, 0), Vec3::Zero()) == 0.0);
  CHECK_FALSE(observation_score(point_at(Vec3(1, 2, 3), n, 0), Vec3(1, 2, 3)));
}

TEST_CASE("global scene point selection") {
  VisibilityVoxelMap vmap;
  vmap.voxel_size = 1.0;
  vmap.voxels[VoxelKey{0, 0, 1}] = {0, 1};
  vmap.voxels[VoxelKey{3, 0, 1}] = {0};
  const std::vector<Pose> poses = {Pose(), Pose(Mat3::Identity(), Vec3(0.5, 0.5, 0))};
  const Vec3 n(0, 0, -1);

  SUBCASE("one point per voxel") {
    std::vector<ScenePoint> pts = {point_at(Vec3(0.5, 0.5, 1.5), n, 0),
                                   point_at(Vec3(3.5, 0.5, 1.5), n, 1)};
    CHECK(select_global_scene_points(pts, vmap, poses) == std::vector<std::size_t>{0, 1});
    CHECK(pts[0].is_global);
    CHECK(pts[1].is_global);
  }
  SUBCASE("argmax within a voxel") {
    // |score| 1/1.5^2 from frame 1 vs a grazing, farther view from frame 0.
    std::vector<ScenePoint> pts = {point_at(Vec3(0.9, 0.9, 1.1), n, 0),
                                   point_at(Vec3(0.5, 0.5, 1.5), n, 1)};
    const double s0 = std::abs(*observation_score(pts[0], poses[0].translation()));
    const double s1 = std::abs(*observation_score(pts[1], poses[1].translation()));
    REQUIRE(s1 > s0);
    CHECK(select_global_scene_points(pts, vmap, poses) == std::vector<std::size_t>{1});
    CHECK_FALSE(pts[0].is_global);
    CHECK(pts[1].is_global);
  }
  SUBCASE("points outside the map are ignored") {
    std::vector<ScenePoint> pts = {point_at(Vec3(9.5, 0.5, 1.5), n, 0)};
    CHECK(select_global_scene_points(pts, vmap, poses).empty());
    CHECK_FALSE(pts[0].is_global);
  }
}

TEST_CASE("global visibility with only the reference frame in the voxel") {
  VisibilityVoxelMap vmap;
  vmap.voxel_size = 1.0;
  vmap.voxels[VoxelKey{0, 0, 2}] = {0};
  const ScenePoint sp = point_at(Vec3(0.1, 0.1, 2.5), Vec3(0, 0, -1), 0);
  const std::vector<Pose> poses = {Pose(), Pose()};
  const std::vector<Image> imgs = {Image(64, 48, 0.5), Image(64, 48, 0.5)};
  const Intrinsics K{60, 60, 31.5, 23.5, 64, 48};
  const auto rec = determine_global_visibility(sp, 4, vmap, poses, imgs, K, ScenePointConfig{});
  CHECK(rec.point == 4);
  CHECK(rec.targets.empty());
}

TEST_CASE("global visibility excludes the other room") {
  const auto scene = synth::two_room_scene(6, 2);
  std::vector<LidarScan> scans;
  std::vector<Vec3> cams;
  std::vector<Pose> poses;
  std::vector<Image> imgs;
  for (std::size_t f = 0; f < scene.frame_count(); ++f) {
    scans.push_back(synth::simulate_lidar(scene, f, 0.0));
    poses.push_back(scene.camera_pose(f));
    cams.push_back(poses.back().translation());
    imgs.push_back(synth::render_ground_truth(scene, f, scene.intrinsics, 1));
  }
  const auto vmap = build_visibility_map(scans, scene.trajectory, cams, VisibilityMapConfig{});
  // The surface point on frame 0's optical axis.
  const auto hit = synth::ray_cast(scene, cams[0], poses[0].z_axis());
  REQUIRE(hit);
  const Vec3 p = hit->point;
  REQUIRE(vmap.find(p));
  Vec3 n = scene.planes[hit->plane].normal();
  if (n.dot(cams[0] - p) < 0) n = -n;
  const ScenePoint sp = point_at(p, n, 0);
  const auto rec = determine_global_visibility(sp, 0, vmap, poses, imgs, scene.intrinsics,
                                               ScenePointConfig{});
  for (const int t : rec.targets) {
    CHECK(t < 6);
    CHECK(t != 0);
    CHECK(synth::visibility_oracle(scene, p, t));
  }
}
