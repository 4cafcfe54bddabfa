#include "lvba/synthetic_world.hpp"

#include "lvba/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace lvba::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(ix));
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy));
  return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double octave_noise(double x, double y, std::uint64_t seed) {
  return 0.55 * value_noise(x, y, seed) + 0.30 * value_noise(2.0 * x, 2.0 * y, seed + 101) +
         0.15 * value_noise(4.0 * x, 4.0 * y, seed + 202);
}

Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }
Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }

/// Body pose (x forward, y left, z up) at position c with yaw and downward pitch.
Pose body_pose(const Vec3& c, double yaw, double pitch_down) {
  return {rot_z(yaw) * rot_y(pitch_down), c};
}

Pose default_extrinsic() {
  Mat3 R;
  // Camera x right, y down, z forward expressed in the LiDAR frame.
  R.col(0) = Vec3(0.0, -1.0, 0.0);
  R.col(1) = Vec3(0.0, 0.0, -1.0);
  R.col(2) = Vec3(1.0, 0.0, 0.0);
  return {R, Vec3(0.05, 0.0, -0.08)};
}

Intrinsics default_intrinsics() {
  Intrinsics K;
  K.fx = K.fy = 200.0;
  K.width = 320;
  K.height = 240;
  K.cx = 159.5;
  K.cy = 119.5;
  return K;
}

Texture noise_texture(const Vec3& base, double amp, double scale, std::uint64_t seed) {
  Texture t;
  t.kind = TextureKind::Noise;
  t.base = base;
  t.amplitude = Vec3::Constant(amp);
  t.scale = scale;
  t.seed = seed;
  return t;
}

Plane make_plane(const Vec3& corner, const Vec3& e1, const Vec3& e2, const Texture& tex) {
  Plane p;
  p.corner = corner;
  p.edge1 = e1;
  p.edge2 = e2;
  p.texture = tex;
  return p;
}

/// Axis-aligned box room: floor, ceiling and the four walls (or a subset).
void add_box(std::vector<Plane>& planes, const Vec3& lo, const Vec3& hi, std::uint64_t seed,
             bool west = true, bool east = true, bool south = true, bool north = true) {
  const Vec3 d = hi - lo;
  const Vec3 ex(d.x(), 0, 0), ey(0, d.y(), 0), ez(0, 0, d.z());
  const double s = 0.25;
  planes.push_back(make_plane(lo, ex, ey, noise_texture({0.40, 0.42, 0.45}, 0.38, s, seed + 1)));
  planes.push_back(make_plane({lo.x(), lo.y(), hi.z()}, ex, ey,
                              noise_texture({0.46, 0.44, 0.40}, 0.34, s, seed + 2)));
  if (west)
    planes.push_back(make_plane(lo, ey, ez, noise_texture({0.44, 0.40, 0.38}, 0.40, s, seed + 3)));
  if (east)
    planes.push_back(make_plane({hi.x(), lo.y(), lo.z()}, ey, ez,
                                noise_texture({0.38, 0.44, 0.42}, 0.40, s, seed + 4)));
  if (south)
    planes.push_back(make_plane(lo, ex, ez, noise_texture({0.42, 0.38, 0.44}, 0.40, s, seed + 5)));
  if (north)
    planes.push_back(make_plane({lo.x(), hi.y(), lo.z()}, ex, ez,
                                noise_texture({0.44, 0.42, 0.36}, 0.40, s, seed + 6)));
}

SceneSpec base_scene(std::uint64_t seed) {
  SceneSpec s;
  s.camera_extrinsic = default_extrinsic();
  s.intrinsics = default_intrinsics();
  s.lidar.azimuth_count = 720;
  s.lidar.elevation_count = 48;
  s.lidar.elevation_min_deg = -40.0;
  s.lidar.elevation_max_deg = 40.0;
  s.supersample = 3;
  s.seed = seed;
  return s;
}

}  // namespace

double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = fade(x - fx), ty = fade(y - fy);
  const double v00 = lattice(ix, iy, seed), v10 = lattice(ix + 1, iy, seed);
  const double v01 = lattice(ix, iy + 1, seed), v11 = lattice(ix + 1, iy + 1, seed);
  return (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11);
}

Eigen::Vector2d plane_coordinates(const Plane& plane, const Vec3& x) {
  const Vec3 d = x - plane.corner;
  Eigen::Matrix2d G;
  G << plane.edge1.dot(plane.edge1), plane.edge1.dot(plane.edge2), plane.edge1.dot(plane.edge2),
      plane.edge2.dot(plane.edge2);
  const Eigen::Vector2d rhs(plane.edge1.dot(d), plane.edge2.dot(d));
  return G.inverse() * rhs;
}

Vec3 albedo(const Plane& plane, const Vec3& x) {
  const Eigen::Vector2d ab = plane_coordinates(plane, x);
  const double u = ab.x() * plane.edge1.norm();
  const double v = ab.y() * plane.edge2.norm();
  const Texture& t = plane.texture;
  switch (t.kind) {
    case TextureKind::Constant:
      return t.base;
    case TextureKind::Checker: {
      const auto i = static_cast<std::int64_t>(std::floor(u / t.scale));
      const auto j = static_cast<std::int64_t>(std::floor(v / t.scale));
      return ((i + j) % 2 == 0) ? t.base : Vec3(t.base + t.amplitude);
    }
    case TextureKind::Ramp:
      return t.base + t.amplitude * (u / t.scale);
    case TextureKind::Noise: {
      const double xs = u / t.scale, ys = v / t.scale;
      const double shared = octave_noise(xs, ys, t.seed);
      Vec3 c;
      for (int k = 0; k < 3; ++k) {
        const double own = octave_noise(xs, ys, t.seed * 7919 + 17 * (k + 1));
        c[k] = t.base[k] + t.amplitude[k] * (0.7 * shared + 0.3 * own);
      }
      return c;
    }
  }
  return t.base;
}

std::optional<Hit> ray_cast(const SceneSpec& scene, const Vec3& origin, const Vec3& dir,
                            double t_min, double t_max) {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < scene.planes.size(); ++i) {
    const Plane& pl = scene.planes[i];
    const Vec3 n = pl.edge1.cross(pl.edge2);
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-15 * n.norm() * dir.norm()) continue;
    const double t = n.dot(pl.corner - origin) / denom;
    if (!(t > t_min && t < t_max)) continue;
    if (best && t >= best->t) continue;
    const Vec3 X = origin + t * dir;
    const Eigen::Vector2d ab = plane_coordinates(pl, X);
    constexpr double tol = 1e-12;
    if (ab.x() < -tol || ab.x() > 1.0 + tol || ab.y() < -tol || ab.y() > 1.0 + tol) continue;
    best = Hit{t, i, X};
  }
  return best;
}

LidarScan simulate_lidar(const SceneSpec& scene, std::size_t frame, double noise_sigma) {
  if (frame >= scene.frame_count()) throw InvalidArgument("simulate_lidar: frame out of range");
  const Pose& T = scene.trajectory[frame];
  const Pose T_inv = T.inverse();
  std::mt19937_64 rng(splitmix64(scene.seed * 1000003ULL + frame));
  std::normal_distribution<double> gauss(0.0, 1.0);

  LidarScan scan;
  scan.timestamp = scene.timestamp(frame);
  scan.init_pose = T;
  const auto& L = scene.lidar;
  const double deg = std::numbers::pi / 180.0;
  for (int j = 0; j < L.elevation_count; ++j) {
    const double el =
        L.elevation_count == 1
            ? L.elevation_min_deg * deg
            : (L.elevation_min_deg + (L.elevation_max_deg - L.elevation_min_deg) * j /
                                         (L.elevation_count - 1)) *
                  deg;
    for (int i = 0; i < L.azimuth_count; ++i) {
      const double az = 2.0 * std::numbers::pi * (i + 0.5) / L.azimuth_count;
      const Vec3 d_s(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const Vec3 d_w = T.quaternion() * d_s;
      const auto hit = ray_cast(scene, T.translation(), d_w, 1e-9, L.max_range);
      if (!hit) continue;
      Vec3 p = T_inv * hit->point;
      if (noise_sigma > 0.0) {
        p += noise_sigma * Vec3(gauss(rng), gauss(rng), gauss(rng));
      }
      scan.points.push_back(p);
    }
  }
  return scan;
}

Image render_ground_truth(const SceneSpec& scene, std::size_t frame, const Intrinsics& K,
                          int supersample) {
  if (frame >= scene.frame_count()) {
    throw InvalidArgument("render_ground_truth: frame out of range");
  }
  if (supersample < 1) throw InvalidArgument("render_ground_truth: supersample must be >= 1");
  const Pose Tc = scene.camera_pose(frame);
  const double eps = scene.exposures.empty() ? 1.0 : scene.exposures[frame];
  const Mat3 Kinv = K.K_inv();
  const Mat3 R = Tc.rotation();
  const int s = supersample;
  const double inv = 1.0 / (s * s);
  Image img(K.width, K.height, 0.0);
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      Vec3 sum = Vec3::Zero();
      for (int j = 0; j < s; ++j) {
        for (int i = 0; i < s; ++i) {
          const double sx = x + (i + 0.5) / s - 0.5, sy = y + (j + 0.5) / s - 0.5;
          const Vec3 d = R * (Kinv * Vec3(sx, sy, 1.0));
          const auto hit = ray_cast(scene, Tc.translation(), d);
          if (!hit) continue;
          sum += (eps * albedo(scene.planes[hit->plane], hit->point)).cwiseMax(0.0).cwiseMin(1.0);
        }
      }
      img.set(x, y, inv * sum);
    }
  }
  return img;
}

Image render_ground_truth(const SceneSpec& scene, std::size_t frame) {
  return render_ground_truth(scene, frame, scene.intrinsics, scene.supersample);
}

PerturbedStates perturb(const std::vector<Pose>& poses, const std::vector<double>& exposures,
                        double sigma_trans, double sigma_rot, double sigma_exposure,
                        std::uint64_t seed) {
  if (sigma_trans < 0.0 || sigma_rot < 0.0 || sigma_exposure < 0.0) {
    throw InvalidArgument("perturb: sigmas must be non-negative");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PerturbedStates out;
  out.poses.reserve(poses.size());
  for (const auto& T : poses) {
    const Vec3 dt(gauss(rng), gauss(rng), gauss(rng));
    const Vec3 dphi(gauss(rng), gauss(rng), gauss(rng));
    out.poses.emplace_back(T.rotation() * so3_exp(sigma_rot * dphi),
                           T.translation() + sigma_trans * dt);
  }
  out.exposures.reserve(exposures.size());
  for (double e : exposures) out.exposures.push_back(e * std::exp(sigma_exposure * gauss(rng)));
  return out;
}

std::vector<Pose> perturb_fixed(const std::vector<Pose>& poses, double trans, double rot,
                                std::uint64_t seed, const std::vector<std::size_t>& keep) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Pose> out;
  out.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Vec3 dir = Vec3(gauss(rng), gauss(rng), gauss(rng)).normalized();
    const Vec3 axis = Vec3(gauss(rng), gauss(rng), gauss(rng)).normalized();
    if (std::find(keep.begin(), keep.end(), i) != keep.end()) {
      out.push_back(poses[i]);
      continue;
    }
    out.emplace_back(poses[i].rotation() * so3_exp(rot * axis),
                     poses[i].translation() + trans * dir);
  }
  return out;
}

bool visibility_oracle(const SceneSpec& scene, const Vec3& p, std::size_t frame) {
  const Pose Tc = scene.camera_pose(frame);
  if (!project(scene.intrinsics, Tc, p)) return false;
  const Vec3 c = Tc.translation();
  return !ray_cast(scene, c, p - c, 1e-9, 1.0 - 1e-7).has_value();
}

SceneSpec textured_room(std::size_t frames, std::uint64_t seed) {
  SceneSpec s = base_scene(seed);
  add_box(s.planes, Vec3(-5, -4, 0), Vec3(5, 4, 3), seed * 31);
  const double deg = std::numbers::pi / 180.0;
  for (std::size_t k = 0; k < frames; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(frames);
    const Vec3 c(1.6 * std::cos(a), 1.2 * std::sin(a), 1.4 + 0.1 * std::sin(3.0 * a));
    s.trajectory.push_back(body_pose(c, a + 20.0 * deg, 8.0 * deg));
    s.exposures.push_back(1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * k / 7.0));
  }
  return s;
}

SceneSpec smooth_room(std::size_t frames, std::uint64_t seed) {
  SceneSpec s = textured_room(frames, seed);
  // Albedo depends on height only, so it is continuous across every edge.
  const Vec3 base(0.35, 0.40, 0.45), amp(0.30, 0.20, 0.10);
  for (auto& pl : s.planes) {
    const bool horizontal = std::abs(pl.normal().z()) > 0.5;
    if (horizontal) {
      pl.texture.kind = TextureKind::Constant;
      pl.texture.base = pl.corner.z() > 1.0 ? Vec3(base + amp) : base;
      pl.texture.amplitude = Vec3::Zero();
    } else {
      const Vec3 horiz = pl.edge1;
      pl.edge1 = pl.edge2;  // vertical edge first: the ramp runs along z
      pl.edge2 = horiz;
      pl.texture.kind = TextureKind::Ramp;
      pl.texture.base = base;
      pl.texture.amplitude = amp;
      pl.texture.scale = 3.0;
    }
  }
  return s;
}

SceneSpec three_wall_room(std::size_t frames, std::uint64_t seed) {
  SceneSpec s = base_scene(seed);
  add_box(s.planes, Vec3(-4, -3, 0), Vec3(4, 3, 3), seed * 37, true, false, true, true);
  const double deg = std::numbers::pi / 180.0;
  for (std::size_t k = 0; k < frames; ++k) {
    const double a = static_cast<double>(k) / std::max<double>(1.0, frames - 1.0);
    const Vec3 c(-1.5 + 2.5 * a, -0.6 + 1.2 * a, 1.3 + 0.2 * std::sin(5.0 * a));
    s.trajectory.push_back(body_pose(c, (200.0 - 60.0 * a) * deg, (4.0 - 6.0 * a) * deg));
    s.exposures.push_back(1.0);
  }
  return s;
}

SceneSpec two_room_scene(std::size_t frames_per_room, std::uint64_t seed) {
  SceneSpec s = base_scene(seed);
  // Room A: x in [-8, 0]; room B: x in [0, 8]; solid wall at x = 0.
  add_box(s.planes, Vec3(-8, -3, 0), Vec3(8, 3, 3), seed * 41);
  s.planes.push_back(make_plane(Vec3(0, -3, 0), Vec3(0, 6, 0), Vec3(0, 0, 3),
                                noise_texture({0.40, 0.44, 0.40}, 0.40, 0.25, seed * 41 + 9)));
  const double deg = std::numbers::pi / 180.0;
  for (int room = 0; room < 2; ++room) {
    const double cx = room == 0 ? -4.5 : 4.5;
    for (std::size_t k = 0; k < frames_per_room; ++k) {
      const double a =
          2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(frames_per_room);
      const Vec3 c(cx + 1.2 * std::cos(a), 0.8 * std::sin(a), 1.4);
      s.trajectory.push_back(body_pose(c, a + 15.0 * deg, 8.0 * deg));
      s.exposures.push_back(1.0 + 0.15 * std::sin(a + room));
    }
  }
  return s;
}

// Wall cabinet: top, front and both ends of the box [lo, hi]; the back
// touches the wall at y = lo.y() (south) or y = hi.y() (north).
void add_cabinet(std::vector<Plane>& planes, const Vec3& lo, const Vec3& hi, bool south,
                 std::uint64_t seed) {
  const Vec3 d = hi - lo;
  const Vec3 ex(d.x(), 0, 0), ey(0, d.y(), 0), ez(0, 0, d.z());
  const double s = 0.25;
  planes.push_back(make_plane({lo.x(), lo.y(), hi.z()}, ex, ey,
                              noise_texture({0.50, 0.46, 0.40}, 0.36, s, seed + 1)));
  planes.push_back(make_plane({lo.x(), south ? hi.y() : lo.y(), lo.z()}, ex, ez,
                              noise_texture({0.36, 0.42, 0.48}, 0.40, s, seed + 2)));
  planes.push_back(make_plane(lo, ey, ez, noise_texture({0.46, 0.38, 0.42}, 0.38, s, seed + 3)));
  planes.push_back(make_plane({hi.x(), lo.y(), lo.z()}, ey, ez,
                              noise_texture({0.40, 0.46, 0.38}, 0.38, s, seed + 4)));
}

SceneSpec revisit_loop_scene(std::size_t frames_per_pass, std::uint64_t seed) {
  SceneSpec s = base_scene(seed);
  add_box(s.planes, Vec3(-4.5, -2.5, 0), Vec3(4.5, 2.5, 3), seed * 43);
  add_cabinet(s.planes, Vec3(-2.2, -2.5, 0), Vec3(-1.0, -1.9, 1.0), true, seed * 43 + 10);
  add_cabinet(s.planes, Vec3(1.2, -2.5, 0), Vec3(2.4, -2.0, 1.3), true, seed * 43 + 20);
  add_cabinet(s.planes, Vec3(-1.6, 1.9, 0), Vec3(-0.4, 2.5, 1.1), false, seed * 43 + 30);
  add_cabinet(s.planes, Vec3(1.8, 2.0, 0), Vec3(3.0, 2.5, 0.9), false, seed * 43 + 40);
  const double deg = std::numbers::pi / 180.0;
  const double n = std::max<double>(1.0, static_cast<double>(frames_per_pass) - 1.0);
  const double pass_gain[3] = {0.95, 0.8, 1.05};
  for (int pass = 0; pass < 3; ++pass) {
    for (std::size_t k = 0; k < frames_per_pass; ++k) {
      const double a = static_cast<double>(k) / n;
      double x, y, yaw;
      if (pass == 1) {
        // Walking back west, facing south; yaw sweeps so the end walls are seen.
        x = 3.0 - 6.0 * a;
        y = 0.8;
        yaw = (-90.0 + 35.0 - 70.0 * a) * deg;
      } else {
        x = -3.0 + 6.0 * a;
        y = pass == 0 ? -0.8 : -0.3;
        yaw = (90.0 + 35.0 - 70.0 * a) * deg;
      }
      s.trajectory.push_back(body_pose(Vec3(x, y, 1.4), yaw, 8.0 * deg));
      s.exposures.push_back(pass_gain[pass] * (1.0 + 0.04 * std::sin(2.1 * k + pass)));
    }
  }
  return s;
}

SceneSpec preset(const std::string& name, std::size_t frames, std::uint64_t seed) {
  if (name == "room") return textured_room(frames, seed);
  if (name == "smooth-room") return smooth_room(frames, seed);
  if (name == "three-wall") return three_wall_room(frames, seed);
  if (name == "two-room") return two_room_scene(std::max<std::size_t>(frames / 2, 1), seed);
  if (name == "revisit-loop") return revisit_loop_scene(std::max<std::size_t>(frames / 3, 1), seed);
  throw InvalidArgument("unknown scene preset '" + name + "'");
}

namespace {

const char* kind_name(TextureKind k) {
  switch (k) {
    case TextureKind::Constant: return "constant";
    case TextureKind::Checker: return "checker";
    case TextureKind::Ramp: return "ramp";
    case TextureKind::Noise: return "noise";
  }
  return "constant";
}

TextureKind kind_from(const std::string& s) {
  if (s == "constant") return TextureKind::Constant;
  if (s == "checker") return TextureKind::Checker;
  if (s == "ramp") return TextureKind::Ramp;
  if (s == "noise") return TextureKind::Noise;
  throw InvalidArgument("unknown texture kind '" + s + "'");
}

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
Vec3 vec_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

nlohmann::json pose_json(const Pose& p) {
  const auto& q = p.quaternion();
  return {{"t", vec_json(p.translation())}, {"q", {q.w(), q.x(), q.y(), q.z()}}};
}

Pose pose_from(const nlohmann::json& j) {
  const auto& q = j.at("q");
  return {Eigen::Quaterniond(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                             q.at(3).get<double>()),
          vec_from(j.at("t"))};
}

}  // namespace

void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = nlohmann::json::object();
  auto& planes = j["planes"] = nlohmann::json::array();
  for (const auto& p : s.planes) {
    planes.push_back({{"corner", vec_json(p.corner)},
                      {"edge1", vec_json(p.edge1)},
                      {"edge2", vec_json(p.edge2)},
                      {"texture",
                       {{"kind", kind_name(p.texture.kind)},
                        {"base", vec_json(p.texture.base)},
                        {"amplitude", vec_json(p.texture.amplitude)},
                        {"scale", p.texture.scale},
                        {"seed", p.texture.seed}}}});
  }
  auto& traj = j["trajectory"] = nlohmann::json::array();
  for (const auto& T : s.trajectory) traj.push_back(pose_json(T));
  j["exposures"] = s.exposures;
  j["camera_extrinsic"] = pose_json(s.camera_extrinsic);
  j["intrinsics"] = {{"fx", s.intrinsics.fx}, {"fy", s.intrinsics.fy}, {"cx", s.intrinsics.cx},
                     {"cy", s.intrinsics.cy}, {"width", s.intrinsics.width},
                     {"height", s.intrinsics.height}};
  j["lidar"] = {{"azimuth_count", s.lidar.azimuth_count},
                {"elevation_count", s.lidar.elevation_count},
                {"elevation_min_deg", s.lidar.elevation_min_deg},
                {"elevation_max_deg", s.lidar.elevation_max_deg},
                {"max_range", s.lidar.max_range}};
  j["frame_dt"] = s.frame_dt;
  j["supersample"] = s.supersample;
  j["seed"] = s.seed;
}

void from_json(const nlohmann::json& j, SceneSpec& s) {
  s = SceneSpec{};
  for (const auto& p : j.at("planes")) {
    Plane pl;
    pl.corner = vec_from(p.at("corner"));
    pl.edge1 = vec_from(p.at("edge1"));
    pl.edge2 = vec_from(p.at("edge2"));
    if (pl.edge1.cross(pl.edge2).norm() < 1e-12) {
      throw InvalidArgument("scene: plane edge vectors are not independent");
    }
    const auto& t = p.at("texture");
    pl.texture.kind = kind_from(t.at("kind").get<std::string>());
    pl.texture.base = vec_from(t.at("base"));
    pl.texture.amplitude = vec_from(t.value("amplitude", nlohmann::json{0.0, 0.0, 0.0}));
    pl.texture.scale = t.value("scale", 1.0);
    pl.texture.seed = t.value("seed", std::uint64_t{0});
    s.planes.push_back(pl);
  }
  for (const auto& T : j.at("trajectory")) s.trajectory.push_back(pose_from(T));
  s.exposures = j.at("exposures").get<std::vector<double>>();
  if (s.exposures.size() != s.trajectory.size()) {
    throw InvalidArgument("scene: exposure count does not match trajectory length");
  }
  for (double e : s.exposures) {
    if (!(e > 0.0)) throw InvalidArgument("scene: exposures must be positive");
  }
  s.camera_extrinsic = pose_from(j.at("camera_extrinsic"));
  const auto& K = j.at("intrinsics");
  s.intrinsics.fx = K.at("fx").get<double>();
  s.intrinsics.fy = K.at("fy").get<double>();
  s.intrinsics.cx = K.at("cx").get<double>();
  s.intrinsics.cy = K.at("cy").get<double>();
  s.intrinsics.width = K.at("width").get<int>();
  s.intrinsics.height = K.at("height").get<int>();
  const auto& L = j.at("lidar");
  s.lidar.azimuth_count = L.at("azimuth_count").get<int>();
  s.lidar.elevation_count = L.at("elevation_count").get<int>();
  s.lidar.elevation_min_deg = L.at("elevation_min_deg").get<double>();
  s.lidar.elevation_max_deg = L.at("elevation_max_deg").get<double>();
  s.lidar.max_range = L.at("max_range").get<double>();
  s.frame_dt = j.value("frame_dt", 0.1);
  s.supersample = j.value("supersample", 1);
  if (s.supersample < 1) throw InvalidArgument("scene: supersample must be >= 1");
  s.seed = j.value("seed", std::uint64_t{1});
}

}  // namespace lvba::synth
