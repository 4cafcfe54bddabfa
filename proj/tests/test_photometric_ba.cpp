#include "doctest.h"

#include "fixture.hpp"

#include "lvba/photometric_ba.hpp"

#include <cmath>

using namespace lvba;

namespace {

const Intrinsics kK{60, 60, 31.5, 23.5, 64, 48};

Image textured(double gain = 1.0) {
  Image img(kK.width, kK.height);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double v = 0.4 + 0.15 * std::sin(0.5 * x) * std::cos(0.35 * y);
      img.set(x, y, Vec3(v, 0.9 * v, 0.8 * v) * gain);
    }
  return img;
}

CostItem item_on(const Image& ref_img, const Pose& ref_pose) {
  CostItem it;
  it.p = Vec3(0.1, -0.05, 2.0);
  it.n = Vec3(0, 0, -1);
  it.patch = *make_patch(ref_img, *project(kK, ref_pose, it.p), 8);
  it.ref = 0;
  it.target = 1;
  return it;
}

ScenePoint point_in_view(int ref) {
  ScenePoint sp;
  sp.p = Vec3(0.0, 0.0, 2.0);
  sp.n = Vec3(0, 0, -1);
  sp.ref_frame = ref;
  return sp;
}

}  // namespace

TEST_CASE("residual vanishes on identical inputs") {
  const Image img = textured();
  const CostItem it = item_on(img, Pose());
  const auto res = photometric_residual({Pose(), 1.0}, {Pose(), 1.0}, it, img, kK);
  REQUIRE(res);
  CHECK(res->r.size() == 3 * 64);
  CHECK(res->r.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(res->weight == 2.0);
}

TEST_CASE("exposure explains brightness") {
  const Image ref = textured();
  const CostItem it = item_on(ref, Pose());
  const auto res = photometric_residual({Pose(), 1.0}, {Pose(), 2.0}, it, textured(2.0), kK);
  REQUIRE(res);
  CHECK(res->r.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("exposure scaling changes only the weight") {
  const Pose tgt(so3_exp(Vec3(0.0, 0.02, 0.0)), Vec3(0.05, 0.0, 0.0));
  const Image a = textured(), b = textured(2.0);
  const auto r1 = photometric_residual({Pose(), 1.0}, {tgt, 1.0}, item_on(a, Pose()), a, kK);
  const auto r2 = photometric_residual({Pose(), 2.0}, {tgt, 2.0}, item_on(b, Pose()), b, kK);
  REQUIRE(r1);
  REQUIRE(r2);
  CHECK(r1->r.cwiseAbs().maxCoeff() > 1e-4);
  CHECK((r1->r - r2->r).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(r1->weight == 2.0);
  CHECK(r2->weight == 8.0);
}

TEST_CASE("degenerate warps are inactive") {
  const Image img = textured();
  CostItem it = item_on(img, Pose());
  const Pose away(Mat3::Identity(), Vec3(0, 0, 5));
  CHECK_FALSE(photometric_residual({Pose(), 1.0}, {away, 1.0}, it, img, kK));
  it.n = Vec3(1, 0, 0);
  it.p = Vec3(0, 0, 2);
  CHECK_FALSE(photometric_residual({Pose(), 1.0}, {Pose(), 1.0}, it, img, kK));
}

TEST_CASE("robust cost") {
  PhotometricResidual res;
  res.r = Eigen::VectorXd::Zero(6);
  res.r[0] = 0.1;   // linear branch: w e^2 = 0.02
  res.r[3] = 0.01;  // quadratic branch: 2e-4
  res.weight = 2.0;
  const double e0 = 0.02;
  const double expected = 2 * 0.05 * std::sqrt(e0) - 0.05 * 0.05 + 2e-4;
  CHECK(robust_item_cost(res, 0.05) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("analytic Jacobian matches central differences") {
  const Image img = textured();
  const CostItem it = item_on(img, Pose());
  const CameraState ref{Pose(so3_exp(Vec3(0.01, -0.01, 0)), Vec3(0.01, 0, 0)), 1.1};
  const CameraState tgt{Pose(so3_exp(Vec3(0.0, 0.03, 0.01)), Vec3(0.08, 0.02, -0.05)), 0.9};
  const Image tgt_img = textured(0.9);
  const auto lin = linearize_item(ref, tgt, it, tgt_img, kK);
  REQUIRE(lin);
  const double h = 1e-6;
  auto moved = [&](int col, double d) {
    CameraState r = ref, t = tgt;
    CameraState& s = col < 7 ? r : t;
    const int k = col % 7;
    if (k < 6) {
      Vec6 xi = Vec6::Zero();
      xi[k] = d;
      s.pose = s.pose.retract(xi);
    } else {
      s.exposure *= std::exp(d);
    }
    return photometric_residual(r, t, it, tgt_img, kK)->r;
  };
  double worst = 0.0;
  for (int c = 0; c < 14; ++c) {
    const Eigen::VectorXd fd = (moved(c, h) - moved(c, -h)) / (2 * h);
    worst = std::max(worst, (fd - lin->J.col(c)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("build_problem counts") {
  const Image img = textured();
  const std::vector<Image> images(5, img);
  const std::vector<CameraState> states(5);
  const std::vector<ScenePoint> pts = {point_in_view(0), point_in_view(1), point_in_view(2)};

  SUBCASE("one point, three targets") {
    const std::vector<VisibilityRecord> recs = {{0, {1, 2, 3}}};
    CHECK(build_problem(states, pts, recs, images, kK, 8, 0).size() == 3);
  }
  SUBCASE("empty target set") {
    const std::vector<VisibilityRecord> recs = {{0, {}}};
    CHECK(build_problem(states, pts, recs, images, kK, 8, 0).empty());
  }
  SUBCASE("sum over points") {
    const std::vector<VisibilityRecord> recs = {{0, {1, 2}}, {1, {0, 2, 3, 4}}, {2, {4}}};
    const auto items = build_problem(states, pts, recs, images, kK, 8, 1);
    REQUIRE(items.size() == 7);
    CHECK(items[2].point == 1);
    CHECK(items[2].ref == 1);
    CHECK(items[2].target == 0);
    CHECK(items[6].level == 1);
  }
}

TEST_CASE("gauge mask") {
  std::vector<CostItem> items(3);
  items[0].ref = 0, items[0].target = 1;
  items[1].ref = 3, items[1].target = 4;
  items[2].ref = 4, items[2].target = 5;
  const FrameMask m = gauge_mask(7, items, true);
  CHECK(m.pose_fixed == std::vector<char>{0, 0, 1, 0, 0, 0, 1});
  CHECK(m.exposure_fixed == std::vector<char>{1, 0, 1, 1, 0, 0, 1});
  const FrameMask off = gauge_mask(7, items, false);
  for (const char e : off.exposure_fixed) CHECK(e == 1);
}

TEST_CASE("solver stays at the ground truth") {
  auto fx = test::make_fixture(synth::textured_room(12, 3), 1);
  VisualBaConfig cfg;
  cfg.solver.levels = 1;
  const auto prob = prepare_level(fx.truth, fx.inputs, cfg, 0);
  REQUIRE(prob.items.size() > 50);
  const FrameMask mask = gauge_mask(fx.truth.size(), prob.items, true);
  SolveReport rep;
  const auto out = lm_solve(fx.truth, prob.items, fx.images, fx.scene.intrinsics, cfg.solver, mask,
                            &rep);
  CHECK(rep.iterations <= 5);
  CHECK(rep.final_cost <= rep.initial_cost);
  for (std::size_t f = 0; f < out.size(); ++f) {
    CHECK(translation_distance(out[f].pose, fx.truth[f].pose) < 1e-3);
    CHECK(rotation_angle(out[f].pose, fx.truth[f].pose) < 0.02 * M_PI / 180);
  }
}

TEST_CASE("every level descends and scene points stay fixed") {
  auto fx = test::make_fixture(synth::textured_room(12, 7), 2);
  const auto poses = [&] {
    std::vector<Pose> p;
    for (const auto& s : fx.truth) p.push_back(s.pose);
    return synth::perturb_fixed(p, 0.02, 0.5 * M_PI / 180, 3, {0});
  }();
  std::vector<CameraState> start = fx.truth;
  for (std::size_t f = 0; f < start.size(); ++f) start[f].pose = poses[f];
  const auto features_before = fx.inputs.features;

  VisualBaConfig cfg;
  cfg.solver.levels = 2;
  VisualBaReport rep;
  const auto out = coarse_to_fine(start, fx.inputs, cfg, &rep);
  REQUIRE(rep.levels.size() == 2);
  CHECK(rep.levels[0].level == 1);
  for (const auto& l : rep.levels) CHECK(l.cost_end <= l.cost_start);
  REQUIRE(fx.inputs.features.size() == features_before.size());
  for (std::size_t i = 0; i < features_before.size(); ++i) {
    CHECK(fx.inputs.features[i].p_f == features_before[i].p_f);
  }
  double before = 0, after = 0;
  for (std::size_t f = 0; f < out.size(); ++f) {
    before += translation_distance(start[f].pose, fx.truth[f].pose);
    after += translation_distance(out[f].pose, fx.truth[f].pose);
  }
  CHECK(after < 0.5 * before);
}

TEST_CASE("single level equals one prepare and solve pass") {
  auto fx = test::make_fixture(synth::textured_room(5, 7), 1, 0.0, 2);
  std::vector<CameraState> start = fx.truth;
  Vec6 xi = Vec6::Zero();
  xi[0] = 0.01;
  start[2].pose = start[2].pose.retract(xi);
  for (auto& s : start) s.exposure = 1.0;
  VisualBaConfig cfg;
  cfg.solver.levels = 1;
  cfg.estimate_exposure = false;
  const auto a = coarse_to_fine(start, fx.inputs, cfg);
  const auto prob = prepare_level(start, fx.inputs, cfg, 0);
  const auto b = lm_solve(start, prob.items, fx.images, fx.scene.intrinsics, cfg.solver,
                          gauge_mask(start.size(), prob.items, false));
  for (std::size_t f = 0; f < a.size(); ++f) {
    CHECK(a[f].pose.matrix() == b[f].pose.matrix());
    CHECK(a[f].exposure == b[f].exposure);
  }
}
