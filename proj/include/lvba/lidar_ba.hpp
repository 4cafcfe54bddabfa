#pragma once

#include "lvba/geometry.hpp"
#include "lvba/voxel.hpp"

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace lvba {

struct LidarScan {
  std::vector<Vec3> points;  // sensor frame, meters
  double timestamp = 0.0;
  Pose init_pose;  // world-from-LiDAR
};

/// A point of a planar voxel, snapped onto the voxel's fitted plane.
struct PlaneFeature {
  Vec3 p_f = Vec3::Zero();
  Vec3 n_f = Vec3::UnitZ();
  double thickness = 0.0;  // sqrt of the smallest scatter eigenvalue
  VoxelKey voxel_key;
  int scan = 0;  // index of the scan that measured the point
};

struct PlaneVoxelParams {
  double voxel_size = 1.0;
  int min_pts = 10;
  double max_eigen_ratio = 0.1;   // lambda_min / lambda_mid
  double max_thickness = 0.05;    // sqrt(lambda_min) bound, meters
};

struct PointRef {
  int scan;
  int index;
};

struct PlaneVoxel {
  Vec3 centroid = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Eigen::Vector3d eigenvalues = Eigen::Vector3d::Zero();  // ascending
  std::vector<PointRef> members;
};

struct PlaneVoxelMap {
  double voxel_size = 1.0;
  std::unordered_map<VoxelKey, PlaneVoxel, VoxelKeyHash> voxels;
};

/// Hashes world-frame points into voxels and keeps only voxels whose scatter
/// passes the planarity test. Normals face the origin of the lowest-index
/// scan with points in the voxel.
PlaneVoxelMap build_plane_voxel_map(const std::vector<LidarScan>& scans,
                                    const std::vector<Pose>& poses,
                                    const PlaneVoxelParams& params);

/// Scatter statistics of a point set: centroid, ascending eigenvalues of the
/// covariance and the eigenvector of the smallest one.
struct PlaneFit {
  Vec3 centroid;
  Eigen::Vector3d eigenvalues;
  Vec3 normal;
};
PlaneFit fit_plane(const std::vector<Vec3>& pts);
bool is_planar(const Eigen::Vector3d& eigenvalues, const PlaneVoxelParams& params);

struct LidarBaConfig {
  PlaneVoxelParams map;
  int max_outer_iters = 100;
  int max_inner_iters = 10;
  double lambda_init = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.5;
  int max_reject = 8;
  double pose_tolerance = 1e-9;  // outer loop stops when the largest update falls below this
  double cost_tolerance = 1e-7;  // relative decrease below which a loop stops
  int feature_stride = 1;        // keep every n-th planar point as a feature
};

struct LidarBaResult {
  std::vector<Pose> poses;
  std::vector<PlaneFeature> features;
  std::vector<double> accepted_costs;  // cost after every accepted LM step, in order
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int outer_iterations = 0;
  bool diverged = false;
  std::string message;
};

/// Point-to-plane bundle adjustment over scan poses. Each outer iteration
/// voxelizes the scans at the current poses; the inner LM then moves all
/// poses jointly with voxel membership fixed, scoring every trial against
/// planes re-fitted at the trial poses. The outer loop stops when poses settle
/// or when a new voxelization raises the cost. Scan 0 is the gauge and never
/// moves.
LidarBaResult optimize_lidar_poses(const std::vector<LidarScan>& scans,
                                   const std::vector<Pose>& init_poses,
                                   const LidarBaConfig& cfg);

/// Sum of squared point-to-plane distances over all planar voxel members.
double point_to_plane_cost(const std::vector<LidarScan>& scans, const std::vector<Pose>& poses,
                           const PlaneVoxelMap& map);

/// Planar features for the given poses.
std::vector<PlaneFeature> extract_plane_features(const std::vector<LidarScan>& scans,
                                                 const std::vector<Pose>& poses,
                                                 const PlaneVoxelMap& map, int stride = 1);

/// Applies the LiDAR correction to a camera pose: T_L_opt * T_L^-1 * T_C.
Pose propagate_camera_pose(const Pose& T_C, const Pose& T_L, const Pose& T_L_opt);

/// Index of the timestamp nearest to t; ties go to the earlier entry.
std::size_t nearest_in_time(const std::vector<double>& stamps, double t);

}  // namespace lvba
