#pragma once

#include "lvba/geometry.hpp"
#include "lvba/lidar_ba.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lvba::synth {

enum class TextureKind { Constant, Checker, Ramp, Noise };

/// Procedural albedo over plane-local coordinates (meters along the edges).
///   Constant: base
///   Checker:  base, or base + amplitude on odd squares of side `scale`
///   Ramp:     base + amplitude * (u / scale), u along the first edge
///   Noise:    base + amplitude * value_noise(u / scale, v / scale), noise in [-1, 1]
struct Texture {
  TextureKind kind = TextureKind::Constant;
  Vec3 base = Vec3::Constant(0.5);
  Vec3 amplitude = Vec3::Zero();
  double scale = 1.0;
  std::uint64_t seed = 0;
};

/// Parallelogram corner + a * edge1 + b * edge2 for a, b in [0, 1].
struct Plane {
  Vec3 corner = Vec3::Zero();
  Vec3 edge1 = Vec3::UnitX();
  Vec3 edge2 = Vec3::UnitY();
  Texture texture;

  Vec3 normal() const { return edge1.cross(edge2).normalized(); }
};

struct LidarPattern {
  int azimuth_count = 360;
  int elevation_count = 32;
  double elevation_min_deg = -30.0;
  double elevation_max_deg = 30.0;
  double max_range = 50.0;
};

struct SceneSpec {
  std::vector<Plane> planes;
  std::vector<Pose> trajectory;  // ground-truth world-from-LiDAR per frame
  std::vector<double> exposures;  // ground-truth relative exposure per frame
  Pose camera_extrinsic;          // LiDAR-from-camera
  Intrinsics intrinsics;
  LidarPattern lidar;
  double frame_dt = 0.1;
  int supersample = 1;  // per-axis samples per pixel for rendering
  std::uint64_t seed = 1;

  std::size_t frame_count() const { return trajectory.size(); }
  Pose camera_pose(std::size_t frame) const { return trajectory[frame] * camera_extrinsic; }
  double timestamp(std::size_t frame) const { return frame_dt * static_cast<double>(frame); }
};

struct Hit {
  double t = 0.0;
  std::size_t plane = 0;
  Vec3 point = Vec3::Zero();
};

/// Nearest ray-plane hit with t in (t_min, t_max); dir need not be unit.
std::optional<Hit> ray_cast(const SceneSpec& scene, const Vec3& origin, const Vec3& dir,
                            double t_min = 1e-9, double t_max = 1e300);

/// Plane-local (a, b) coordinates of a point, in fractions of the edges.
Eigen::Vector2d plane_coordinates(const Plane& plane, const Vec3& x);

Vec3 albedo(const Plane& plane, const Vec3& x);

/// Smooth value noise in [-1, 1]; C1 continuous.
double value_noise(double x, double y, std::uint64_t seed);

/// Exact nearest-hit LiDAR returns over the ray grid, in the sensor frame,
/// with isotropic Gaussian noise of noise_sigma per axis (seeded by scene
/// seed and frame).
LidarScan simulate_lidar(const SceneSpec& scene, std::size_t frame, double noise_sigma);

/// Per-pixel ray cast: albedo * exposure, clamped to [0, 1], averaged over a
/// supersample x supersample grid inside the pixel (1 = pixel center only).
/// Rays that hit nothing contribute black.
Image render_ground_truth(const SceneSpec& scene, std::size_t frame, const Intrinsics& K,
                          int supersample = 1);
Image render_ground_truth(const SceneSpec& scene, std::size_t frame);

struct PerturbedStates {
  std::vector<Pose> poses;
  std::vector<double> exposures;
};

/// Seeded Gaussian perturbation: translation offsets and axis-angle rotation
/// (right-multiplied) per axis, and log-exposure offsets.
PerturbedStates perturb(const std::vector<Pose>& poses, const std::vector<double>& exposures,
                        double sigma_trans, double sigma_rot, double sigma_exposure,
                        std::uint64_t seed);

/// Fixed-magnitude perturbation: every pose moves exactly `trans` meters and
/// rotates exactly `rot` radians, in seeded random directions. Poses listed
/// in `keep` are left untouched.
std::vector<Pose> perturb_fixed(const std::vector<Pose>& poses, double trans, double rot,
                                std::uint64_t seed, const std::vector<std::size_t>& keep = {});

/// True iff p projects into the frame's image and the segment from the
/// camera center to p crosses no plane before reaching p.
bool visibility_oracle(const SceneSpec& scene, const Vec3& p, std::size_t frame);

// Preset scenes used by tests, the acceptance suite and the CLI.

/// Closed box room with textured walls, floor and ceiling and a loop of
/// frames looking outward.
SceneSpec textured_room(std::size_t frames, std::uint64_t seed);

/// Room with three walls, floor and ceiling, for LiDAR BA tests.
SceneSpec three_wall_room(std::size_t frames, std::uint64_t seed);

/// Two rooms separated by a solid dividing wall; the trajectory visits room A
/// then room B, staying away from the dividing wall.
SceneSpec two_room_scene(std::size_t frames_per_room, std::uint64_t seed);

/// Corridor walked three times: facing the north wall, the south wall, then
/// the north wall again. Exposures vary per frame.
SceneSpec revisit_loop_scene(std::size_t frames_per_pass, std::uint64_t seed);

/// Same room geometry as textured_room but with smooth ramp textures.
SceneSpec smooth_room(std::size_t frames, std::uint64_t seed);

SceneSpec preset(const std::string& name, std::size_t frames, std::uint64_t seed);

void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);

}  // namespace lvba::synth
