#include "doctest.h"

#include "lvba/synthetic_world.hpp"

#include <cmath>
#include <random>

using namespace lvba;
using namespace lvba::synth;

namespace {

SceneSpec facing_plane(Texture tex, double z = 5.0) {
  SceneSpec s;
  Plane p;
  p.corner = Vec3(-20, -20, z);
  p.edge1 = Vec3(40, 0, 0);
  p.edge2 = Vec3(0, 40, 0);
  p.texture = tex;
  s.planes.push_back(p);
  s.trajectory = {Pose()};
  s.exposures = {1.0};
  s.intrinsics = Intrinsics{80, 80, 39.5, 29.5, 80, 60};
  s.lidar.azimuth_count = 90;
  s.lidar.elevation_count = 30;
  s.lidar.elevation_min_deg = 10;
  s.lidar.elevation_max_deg = 80;
  return s;
}

bool crosses_any(const SceneSpec& s, const Vec3& a, const Vec3& b, int steps) {
  for (const auto& pl : s.planes) {
    const Vec3 n = pl.normal();
    double prev = n.dot(a - pl.corner);
    for (int k = 1; k <= steps; ++k) {
      const Vec3 x = a + (b - a) * (static_cast<double>(k) / steps);
      const double cur = n.dot(x - pl.corner);
      if ((prev < 0) != (cur < 0)) {
        const Vec3 m = x - (b - a) / (2.0 * steps);
        const auto ab = plane_coordinates(pl, m);
        if (ab.x() >= 0 && ab.x() <= 1 && ab.y() >= 0 && ab.y() <= 1) return true;
      }
      prev = cur;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("LiDAR returns lie on the plane") {
  const SceneSpec s = facing_plane(Texture{});
  const LidarScan scan = simulate_lidar(s, 0, 0.0);
  REQUIRE(scan.points.size() > 1000);
  for (const auto& p : scan.points) CHECK(std::abs(p.z() - 5.0) < 1e-12);
}

TEST_CASE("nearest plane wins") {
  SceneSpec s = facing_plane(Texture{}, 5.0);
  s.planes.push_back(facing_plane(Texture{}, 3.0).planes[0]);
  const LidarScan scan = simulate_lidar(s, 0, 0.0);
  REQUIRE_FALSE(scan.points.empty());
  for (const auto& p : scan.points) CHECK(std::abs(p.z() - 3.0) < 1e-12);
}

TEST_CASE("range noise has the configured spread") {
  SceneSpec s = facing_plane(Texture{});
  s.lidar.azimuth_count = 360;
  s.lidar.elevation_count = 40;
  const LidarScan scan = simulate_lidar(s, 0, 0.01);
  REQUIRE(scan.points.size() >= 10000);
  double sum = 0, sq = 0;
  for (const auto& p : scan.points) {
    sum += p.z() - 5.0;
    sq += (p.z() - 5.0) * (p.z() - 5.0);
  }
  const double n = static_cast<double>(scan.points.size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  CHECK(std::abs(sd - 0.01) < 0.001);
}

TEST_CASE("rendering constant textures and exposure") {
  Texture t;
  t.base = Vec3(0.2, 0.3, 0.4);
  SceneSpec s = facing_plane(t);
  const Image a = render_ground_truth(s, 0, s.intrinsics, 2);
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) CHECK((a.at(x, y) - t.base).norm() < 1e-15);
  s.exposures[0] = 2.0;
  const Image b = render_ground_truth(s, 0, s.intrinsics, 2);
  for (std::size_t i = 0; i < a.data().size(); ++i) CHECK(b.data()[i] == 2.0 * a.data()[i]);
}

TEST_CASE("checker edges land on their analytic projections") {
  Texture t;
  t.kind = TextureKind::Checker;
  t.base = Vec3::Constant(0.2);
  t.amplitude = Vec3::Constant(0.6);
  t.scale = 0.5;
  const SceneSpec s = facing_plane(t, 4.0);
  const Intrinsics& K = s.intrinsics;
  const Image img = render_ground_truth(s, 0, K, 1);
  const int row = 17;
  int edges = 0;
  for (int x = 0; x + 1 < K.width; ++x) {
    if (std::abs(img.at(x, row).x() - img.at(x + 1, row).x()) < 0.3) continue;
    ++edges;
    double best = 1e9;
    for (int k = -40; k <= 40; ++k) {
      const double u = K.fx * (0.5 * k) / 4.0 + K.cx;
      best = std::min(best, std::abs(u - (x + 0.5)));
    }
    CHECK(best <= 0.5 + 1e-9);
  }
  CHECK(edges >= 6);
}

TEST_CASE("perturbation") {
  std::vector<Pose> poses(200);
  const std::vector<double> exps(200, 1.0);
  const auto none = perturb(poses, exps, 0, 0, 0, 3);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    CHECK(none.poses[i].matrix() == poses[i].matrix());
    CHECK(none.exposures[i] == 1.0);
  }
  const auto a = perturb(poses, exps, 0.05, 0.01, 0.1, 9);
  const auto b = perturb(poses, exps, 0.05, 0.01, 0.1, 9);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    CHECK(a.poses[i].matrix() == b.poses[i].matrix());
    CHECK(a.exposures[i] == b.exposures[i]);
  }
  for (int axis = 0; axis < 3; ++axis) {
    double sq = 0;
    for (const auto& p : a.poses) sq += p.translation()[axis] * p.translation()[axis];
    CHECK(std::abs(std::sqrt(sq / 200) - 0.05) < 0.15 * 0.05);
  }

  const auto fixed = perturb_fixed(poses, 0.05, 0.02, 4, {7});
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (i == 7) {
      CHECK(fixed[i].matrix() == poses[i].matrix());
      continue;
    }
    CHECK(translation_distance(fixed[i], poses[i]) == doctest::Approx(0.05));
    CHECK(rotation_angle(fixed[i], poses[i]) == doctest::Approx(0.02));
  }
}

TEST_CASE("visibility oracle") {
  const SceneSpec s = two_room_scene(4, 1);
  const Pose T = s.camera_pose(0);
  const Vec3 ahead = T * Vec3(0, 0, 1.0);
  CHECK(visibility_oracle(s, ahead, 0));
  // Frame 4 sits in room B; room A's interior is behind the dividing wall.
  const Pose TB = s.camera_pose(4);
  const Vec3 c = TB.translation();
  const Vec3 through(-2.0, c.y(), c.z());
  if (project(s.intrinsics, TB, through)) CHECK_FALSE(visibility_oracle(s, through, 4));
  CHECK_FALSE(visibility_oracle(s, T * Vec3(0, 0, -1.0), 0));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> X(-7.9, 7.9), Y(-2.9, 2.9), Z(0.1, 2.9);
  std::uniform_int_distribution<std::size_t> F(0, s.frame_count() - 1);
  int agree = 0, total = 0, visible = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p(X(rng), Y(rng), Z(rng));
    const std::size_t f = F(rng);
    const Pose Tf = s.camera_pose(f);
    const bool in_view = project(s.intrinsics, Tf, p).has_value();
    const bool march = in_view && !crosses_any(s, Tf.translation(), p, 4000);
    const bool oracle = visibility_oracle(s, p, f);
    agree += march == oracle;
    visible += oracle;
    ++total;
  }
  CHECK(agree == total);
  CHECK(visible > 20);
}

TEST_CASE("presets and scene JSON") {
  const SceneSpec s = revisit_loop_scene(4, 3);
  CHECK(s.frame_count() == 12);
  CHECK(s.exposures.size() == 12);
  double brightest = 0.0;
  for (std::size_t f = 0; f < s.frame_count(); ++f) {
    const Image img = render_ground_truth(s, f, s.intrinsics, 1);
    for (const double v : img.data()) brightest = std::max(brightest, v);
  }
  CHECK(brightest < 0.95);
  nlohmann::json j = s;
  const SceneSpec back = j.get<SceneSpec>();
  REQUIRE(back.planes.size() == s.planes.size());
  CHECK(back.trajectory[5].matrix() == s.trajectory[5].matrix());
  CHECK(back.planes[3].texture.seed == s.planes[3].texture.seed);
  CHECK(back.intrinsics.fx == s.intrinsics.fx);
  CHECK_THROWS(preset("nope", 3, 1));
}
