#pragma once

#include "lvba/geometry.hpp"
#include "lvba/homography.hpp"
#include "lvba/lidar_ba.hpp"
#include "lvba/voxel.hpp"

#include <cstddef>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lvba {

/// LiDAR-derived point with plane normal; fixed structure during visual BA.
struct ScenePoint {
  Vec3 p = Vec3::Zero();
  Vec3 n = Vec3::UnitZ();
  int ref_frame = 0;
  double dog_score = 0.0;
  bool is_global = false;
};

/// Frames that re-observe a scene point.
struct VisibilityRecord {
  std::size_t point = 0;  // index into the scene point list
  std::vector<int> targets;
};

struct ScenePointConfig {
  double alpha0 = 0.2;  // normal vs view direction for generation
  double alpha1 = 0.3;  // view direction vs optical axis
  double alpha2 = 0.2;  // view direction vs normal
  double alpha3 = 0.8;  // NCC
  int cell = 32;        // grid cell size in pixels at full resolution
  int window_size = 10;
  double sigma1 = 1.0;
  double sigma2 = 1.6;
  double min_score = 0.01;
  double radius = 10.0;  // max distance between scan origin and camera for feature use
  int patch_size = 8;
};

/// Planar LiDAR support per voxel: unit normal and offset d with n^T x = d.
struct PlaneSupport {
  double voxel_size = 1.0;
  std::unordered_map<VoxelKey, std::pair<Vec3, double>, VoxelKeyHash> planes;
};

/// Collects the plane of every voxel that produced features.
PlaneSupport plane_support(std::span<const PlaneFeature> features, double voxel_size);

/// True iff the rays through the patch corners and center, intersected with
/// the plane (p, n), land in supported voxels lying on that same plane, and
/// no ray crosses another voxel's plane first.
bool patch_supported(const Vec3& p, const Vec3& n, const Pose& pose, const Intrinsics& K,
                     int patch_size, const PlaneSupport& support);

/// Difference-of-Gaussians response map over the grayscale (RGB mean) image.
/// Pixels closer than the kernel radius to the border hold 0.
GrayImage dog_image(const Image& img, double sigma1, double sigma2);

/// Kernel radius used for sigma (ceil(3 sigma)).
int gaussian_radius(double sigma);

/// |(G_s1 * gray)(u) - (G_s2 * gray)(u)| at round(u); 0 near the border.
double dog_score(const Image& img, const Vec2& u, double sigma1 = 1.0, double sigma2 = 1.6);

/// Grid-cell best-DoG selection of LiDAR plane features seen from one frame.
/// `dog` is the frame's DoG map (see dog_image); `cell` is in pixels at K's
/// resolution. With `support`, candidates whose patch leaves their plane are skipped.
std::vector<ScenePoint> generate_local_scene_points(int frame_idx, const GrayImage& dog,
                                                    const Intrinsics& K,
                                                    const Pose& pose,
                                                    std::span<const PlaneFeature> features,
                                                    const ScenePointConfig& cfg, int cell,
                                                    const PlaneSupport* support = nullptr);

/// Convenience overload computing the DoG map and using cfg.cell.
std::vector<ScenePoint> generate_local_scene_points(int frame_idx, const Image& img,
                                                    const Intrinsics& K, const Pose& pose,
                                                    std::span<const PlaneFeature> features,
                                                    const ScenePointConfig& cfg);

/// Features whose source scan origin lies within `radius` of `camera_pos`.
std::vector<PlaneFeature> features_near(std::span<const PlaneFeature> features,
                                        std::span<const Vec3> scan_positions,
                                        const Vec3& camera_pos, double radius);

/// Zero-mean normalized cross-correlation over grayscale patch colors;
/// 0 when either side has no variance.
double ncc(std::span<const Vec3> a, std::span<const Vec3> b);

/// Shared per-candidate test: both direction checks, reference and target on
/// the same side of the point's plane, full in-bounds warp of the reference
/// patch and NCC above alpha3. All evaluated at `poses`.
bool passes_visibility_checks(const ScenePoint& sp, int target, std::span<const Pose> poses,
                              std::span<const Image> images, const Intrinsics& K,
                              const ScenePointConfig& cfg);

/// Index window [ref - w, ref + w] clipped to [0, frame_count), minus ref.
std::vector<int> sliding_window(int ref, int window_size, int frame_count);

VisibilityRecord determine_local_visibility(const ScenePoint& sp, std::size_t point_index,
                                            std::span<const int> window,
                                            std::span<const Pose> poses,
                                            std::span<const Image> images, const Intrinsics& K,
                                            const ScenePointConfig& cfg);

}  // namespace lvba
