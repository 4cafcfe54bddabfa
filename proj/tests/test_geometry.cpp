#include "doctest.h"

#include "lvba/geometry.hpp"

#include <random>

using namespace lvba;

namespace {

Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec6 xi;
  for (int i = 0; i < 6; ++i) xi[i] = g(rng);
  return Pose::exp(xi);
}

double max_abs(const Mat4& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("compose identity and inverse") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Pose x = random_pose(rng);
    CHECK(max_abs(compose(Pose::identity(), x).matrix() - x.matrix()) < 1e-15);
    CHECK(max_abs(compose(x, x.inverse()).matrix() - Mat4::Identity()) < 1e-12);
  }
}

TEST_CASE("compose matches homogeneous matrix product") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Pose c = compose(a, b);
    const Mat3 R = c.rotation();
    CHECK((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(max_abs(c.matrix() - a.matrix() * b.matrix()) < 1e-12);
  }
}

TEST_CASE("from_matrix round trip and retract") {
  std::mt19937_64 rng(3);
  const Pose a = random_pose(rng);
  CHECK(max_abs(Pose::from_matrix(a.matrix()).matrix() - a.matrix()) < 1e-14);
  CHECK(max_abs(a.retract(Vec6::Zero()).matrix() - a.matrix()) < 1e-15);
  Vec6 xi = Vec6::Zero();
  xi[0] = 1.0;
  CHECK((a.retract(xi).translation() - (a.translation() + a.rotation().col(0))).norm() < 1e-14);
}

TEST_CASE("so3_exp and hat") {
  const Vec3 a(0.3, -0.2, 0.5), b(1.0, 2.0, -0.5);
  CHECK((hat(a) * b - a.cross(b)).norm() < 1e-15);
  const Mat3 R = so3_exp(Vec3(0, 0, M_PI / 2));
  CHECK((R * Vec3::UnitX() - Vec3::UnitY()).norm() < 1e-15);
  CHECK((so3_exp(Vec3(1e-12, 0, 0)) - Mat3::Identity()).norm() < 1e-11);
}

TEST_CASE("distances between poses") {
  const Pose a;
  const Pose b(so3_exp(Vec3(0, 0.1, 0)), Vec3(3, 4, 0));
  CHECK(translation_distance(a, b) == doctest::Approx(5.0));
  CHECK(rotation_angle(a, b) == doctest::Approx(0.1));
}

TEST_CASE("projection") {
  Intrinsics K{100, 100, 50, 50, 101, 101};
  const auto c = project(K, Pose::identity(), Vec3(0, 0, 1));
  REQUIRE(c);
  CHECK((*c - Vec2(50, 50)).norm() < 1e-12);
  const auto r = project(K, Pose::identity(), Vec3(0.1, 0, 1));
  REQUIRE(r);
  CHECK((*r - Vec2(60, 50)).norm() < 1e-12);
  CHECK_FALSE(project(K, Pose::identity(), Vec3(0, 0, -1)));
  CHECK_FALSE(project(K, Pose::identity(), Vec3(10, 0, 1)));
  CHECK(project_unbounded(K, Pose::identity(), Vec3(10, 0, 1)));
}

TEST_CASE("bilinear sampling") {
  Image img(4, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) img.set(x, y, Vec3::Constant(0.1 * x + 0.03 * y + 0.01 * x * y));
  CHECK(sample_bilinear(img, Vec2(2, 1))[0] == img.at(2, 1)[0]);

  Image edge(2, 2);
  edge.set(1, 0, Vec3::Ones());
  edge.set(1, 1, Vec3::Ones());
  CHECK(sample_bilinear(edge, Vec2(0.5, 0.3))[1] == doctest::Approx(0.5).epsilon(1e-15));

  Image ramp(16, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) ramp.set(x, y, Vec3(0.02 * x + 0.03 * y, 0.01 * x, 0.05 * y));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ux(0, 15), uy(0, 11);
  for (int i = 0; i < 200; ++i) {
    const Vec2 u(ux(rng), uy(rng));
    const Vec3 v = sample_bilinear(ramp, u);
    CHECK(std::abs(v[0] - (0.02 * u.x() + 0.03 * u.y())) < 1e-12);
    CHECK(std::abs(v[2] - 0.05 * u.y()) < 1e-12);
  }
}

TEST_CASE("cubic sampling reproduces quadratics and its gradient") {
  Image img(12, 10);
  auto f = [](double x, double y) { return 0.01 * x * x - 0.005 * x * y + 0.02 * y + 0.1; };
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 12; ++x) img.set(x, y, Vec3::Constant(f(x, y)));
  const Vec2 u(5.3, 4.7);
  Eigen::Matrix<double, 3, 2> g;
  const Vec3 v = sample_cubic(img, u, g);
  CHECK(v[0] == doctest::Approx(f(u.x(), u.y())).epsilon(1e-12));
  CHECK(g(0, 0) == doctest::Approx(0.02 * u.x() - 0.005 * u.y()).epsilon(1e-10));
  CHECK(g(0, 1) == doctest::Approx(-0.005 * u.x() + 0.02).epsilon(1e-10));
}

TEST_CASE("pyramid") {
  Intrinsics K{100, 100, 3.5, 3.5, 8, 8};
  Image c(8, 8, 0.37);
  const Pyramid one = build_pyramid(c, K, 1);
  REQUIRE(one.levels.size() == 1);
  CHECK(one.levels[0].image == c);

  const Pyramid p = build_pyramid(c, K, 3);
  REQUIRE(p.levels.size() == 3);
  for (const auto& l : p.levels)
    for (const double v : l.image.data()) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
  CHECK(p.levels[1].image.width() == 4);
  CHECK(p.levels[1].intrinsics.fx == doctest::Approx(50));
  CHECK(p.levels[1].intrinsics.cx == doctest::Approx(1.5));

  Image checker(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker.set(x, y, Vec3::Constant((x + y) % 2));
  const Image half = downsample(checker);
  for (const double v : half.data()) CHECK(v == 0.5);
}

TEST_CASE("pyramid intrinsics keep the projection consistent") {
  Intrinsics K{200, 180, 63.5, 47.5, 128, 96};
  const Intrinsics H = K.half();
  const Vec3 p(0.2, -0.1, 2.0);
  const auto u0 = project(K, Pose::identity(), p);
  const auto u1 = project(H, Pose::identity(), p);
  REQUIRE(u0);
  REQUIRE(u1);
  // Full-res pixel centers 2i and 2i+1 average into half-res pixel i.
  CHECK(u1->x() == doctest::Approx((u0->x() + 0.5) / 2 - 0.5));
  CHECK(u1->y() == doctest::Approx((u0->y() + 0.5) / 2 - 0.5));
}
