#include "lvba/lidar_ba.hpp"

#include "lvba/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace lvba {

PlaneFit fit_plane(const std::vector<Vec3>& pts) {
  PlaneFit fit;
  fit.centroid = Vec3::Zero();
  for (const auto& p : pts) fit.centroid += p;
  fit.centroid /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) {
    const Vec3 d = p - fit.centroid;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  fit.eigenvalues = es.eigenvalues().cwiseMax(0.0);
  fit.normal = es.eigenvectors().col(0).normalized();
  return fit;
}

bool is_planar(const Eigen::Vector3d& ev, const PlaneVoxelParams& params) {
  if (ev[1] <= 0.0) return false;
  return ev[0] / ev[1] < params.max_eigen_ratio &&
         ev[0] < params.max_thickness * params.max_thickness;
}

namespace {

std::vector<std::vector<Vec3>> to_world(const std::vector<LidarScan>& scans,
                                        const std::vector<Pose>& poses) {
  std::vector<std::vector<Vec3>> world(scans.size());
  for (std::size_t s = 0; s < scans.size(); ++s) {
    world[s].reserve(scans[s].points.size());
    for (const auto& q : scans[s].points) world[s].push_back(poses[s] * q);
  }
  return world;
}

std::vector<VoxelKey> sorted_keys(const PlaneVoxelMap& map) {
  std::vector<VoxelKey> keys;
  keys.reserve(map.voxels.size());
  for (const auto& [k, _] : map.voxels) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace

PlaneVoxelMap build_plane_voxel_map(const std::vector<LidarScan>& scans,
                                    const std::vector<Pose>& poses,
                                    const PlaneVoxelParams& params) {
  if (scans.empty()) throw InvalidArgument("build_plane_voxel_map: no scans");
  if (scans.size() != poses.size()) {
    throw InvalidArgument("build_plane_voxel_map: scan/pose count mismatch");
  }
  const auto world = to_world(scans, poses);

  std::unordered_map<VoxelKey, std::vector<PointRef>, VoxelKeyHash> buckets;
  for (std::size_t s = 0; s < world.size(); ++s) {
    for (std::size_t i = 0; i < world[s].size(); ++i) {
      buckets[voxel_key(world[s][i], params.voxel_size)].push_back(
          {static_cast<int>(s), static_cast<int>(i)});
    }
  }

  PlaneVoxelMap map;
  map.voxel_size = params.voxel_size;
  std::vector<Vec3> pts;
  for (auto& [key, members] : buckets) {
    if (static_cast<int>(members.size()) < params.min_pts) continue;
    pts.clear();
    for (const auto& m : members) pts.push_back(world[m.scan][m.index]);
    const PlaneFit fit = fit_plane(pts);
    if (!is_planar(fit.eigenvalues, params)) continue;

    PlaneVoxel voxel;
    voxel.centroid = fit.centroid;
    voxel.eigenvalues = fit.eigenvalues;
    voxel.normal = fit.normal;
    // Members are appended scan by scan, so the first one has the lowest scan index.
    const Vec3 origin = poses[members.front().scan].translation();
    if (voxel.normal.dot(origin - voxel.centroid) < 0.0) voxel.normal = -voxel.normal;
    voxel.members = std::move(members);
    map.voxels.emplace(key, std::move(voxel));
  }
  return map;
}

double point_to_plane_cost(const std::vector<LidarScan>& scans, const std::vector<Pose>& poses,
                           const PlaneVoxelMap& map) {
  double cost = 0.0;
  for (const auto& key : sorted_keys(map)) {
    const auto& v = map.voxels.at(key);
    for (const auto& m : v.members) {
      const double r = v.normal.dot(poses[m.scan] * scans[m.scan].points[m.index] - v.centroid);
      cost += r * r;
    }
  }
  return cost;
}

std::vector<PlaneFeature> extract_plane_features(const std::vector<LidarScan>& scans,
                                                 const std::vector<Pose>& poses,
                                                 const PlaneVoxelMap& map, int stride) {
  std::vector<PlaneFeature> out;
  stride = std::max(stride, 1);
  for (const auto& key : sorted_keys(map)) {
    const auto& v = map.voxels.at(key);
    const double thickness = std::sqrt(std::max(v.eigenvalues[0], 0.0));
    for (std::size_t i = 0; i < v.members.size(); i += static_cast<std::size_t>(stride)) {
      const auto& m = v.members[i];
      const Vec3 w = poses[m.scan] * scans[m.scan].points[m.index];
      PlaneFeature f;
      f.p_f = w - v.normal * v.normal.dot(w - v.centroid);
      f.n_f = v.normal;
      f.thickness = thickness;
      f.voxel_key = key;
      f.scan = m.scan;
      out.push_back(f);
    }
  }
  return out;
}

namespace {

using Mat6 = Eigen::Matrix<double, 6, 6>;

// Joint normal equations over all scan poses. Each voxel's plane is
// re-fitted at the current poses, and its offset is eliminated: the residual
// n^T (p_i - c) moves with the centroid c, which couples every scan seen in
// the voxel.
struct NormalSystem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  double cost = 0.0;
};

NormalSystem linearize(const std::vector<LidarScan>& scans, const std::vector<Pose>& poses,
                       const PlaneVoxelMap& map, const std::vector<VoxelKey>& keys) {
  const auto S = static_cast<Eigen::Index>(scans.size());
  NormalSystem sys;
  sys.H = Eigen::MatrixXd::Zero(6 * S, 6 * S);
  sys.g = Eigen::VectorXd::Zero(6 * S);
  std::vector<Vec3> pts;
  std::vector<Eigen::Matrix<double, 1, 6>> A(scans.size());
  std::vector<int> seen;
  for (const auto& key : keys) {
    const auto& v = map.voxels.at(key);
    pts.clear();
    for (const auto& m : v.members) pts.push_back(poses[m.scan] * scans[m.scan].points[m.index]);
    const PlaneFit fit = fit_plane(pts);
    const Vec3& n = fit.normal;
    const double N = static_cast<double>(pts.size());
    sys.cost += N * fit.eigenvalues[0];
    seen.clear();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto& m = v.members[i];
      const double r = n.dot(pts[i] - fit.centroid);
      // Right perturbation: d(Rq + t) = R d_rho - R [q]x d_phi.
      const Eigen::RowVector3d nR = n.transpose() * poses[m.scan].rotation();
      Eigen::Matrix<double, 1, 6> J;
      J.head<3>() = nR;
      J.tail<3>() = -nR * hat(scans[m.scan].points[m.index]);
      const auto o = 6 * static_cast<Eigen::Index>(m.scan);
      sys.H.block<6, 6>(o, o).noalias() += J.transpose() * J;
      sys.g.segment<6>(o).noalias() += J.transpose() * r;
      if (seen.empty() || seen.back() != m.scan) {
        seen.push_back(m.scan);
        A[m.scan].setZero();
      }
      A[m.scan] += J / N;
    }
    for (int a : seen) {
      for (int b : seen) {
        sys.H.block<6, 6>(6 * a, 6 * b).noalias() -= N * A[a].transpose() * A[b];
      }
    }
  }
  return sys;
}

// Sum of squared distances to planes re-fitted at the given poses.
double cost_at(const std::vector<LidarScan>& scans, const std::vector<Pose>& poses,
               const PlaneVoxelMap& map, const std::vector<VoxelKey>& keys) {
  double cost = 0.0;
  std::vector<Vec3> pts;
  for (const auto& key : keys) {
    const auto& v = map.voxels.at(key);
    pts.clear();
    for (const auto& m : v.members) pts.push_back(poses[m.scan] * scans[m.scan].points[m.index]);
    cost += static_cast<double>(pts.size()) * fit_plane(pts).eigenvalues[0];
  }
  return cost;
}

}  // namespace

LidarBaResult optimize_lidar_poses(const std::vector<LidarScan>& scans,
                                   const std::vector<Pose>& init_poses,
                                   const LidarBaConfig& cfg) {
  if (scans.empty()) throw InvalidArgument("optimize_lidar_poses: no scans");
  if (scans.size() != init_poses.size()) {
    throw InvalidArgument("optimize_lidar_poses: scan/pose count mismatch");
  }
  LidarBaResult res;
  res.poses = init_poses;

  if (scans.size() == 1) {
    const auto map = build_plane_voxel_map(scans, res.poses, cfg.map);
    res.initial_cost = res.final_cost = point_to_plane_cost(scans, res.poses, map);
    res.features = extract_plane_features(scans, res.poses, map, cfg.feature_stride);
    res.message = "single scan: gauge-fixed, nothing to optimize";
    return res;
  }

  const auto S = static_cast<Eigen::Index>(scans.size());
  const Eigen::Index n = 6 * (S - 1);
  double lambda = cfg.lambda_init;
  bool first = true;
  bool settled = false;
  double last_cost = 0.0;
  for (int outer = 0; outer < cfg.max_outer_iters; ++outer) {
    const auto map = build_plane_voxel_map(scans, res.poses, cfg.map);
    const auto keys = sorted_keys(map);
    const std::vector<Pose> start = res.poses;
    double outer_start_cost = 0.0;

    int rejects = 0;
    bool accepted_any = false;
    NormalSystem sys = linearize(scans, res.poses, map, keys);
    if (first) {
      res.initial_cost = sys.cost;
      first = false;
    } else if (sys.cost > last_cost) {
      // Boundary points changed voxels and the new map is worse at the same poses.
      settled = true;
      break;
    }
    const double grad_norm = sys.g.tail(n).lpNorm<Eigen::Infinity>();
    outer_start_cost = sys.cost;

    for (int inner = 0; inner < cfg.max_inner_iters && rejects < cfg.max_reject;) {
      Eigen::MatrixXd H = sys.H.bottomRightCorner(n, n);
      Eigen::VectorXd g = sys.g.tail(n);
      const double dmax = std::max(H.diagonal().maxCoeff(), 1e-300);
      for (Eigen::Index k = 0; k < n; ++k) {
        if (H(k, k) <= 1e-12 * dmax) {  // scan has no plane members
          H.row(k).setZero();
          H.col(k).setZero();
          H(k, k) = 1.0;
          g[k] = 0.0;
        } else {
          H(k, k) *= 1.0 + lambda;
        }
      }
      const Eigen::VectorXd dx = H.ldlt().solve(-g);
      std::vector<Pose> trial = res.poses;
      for (Eigen::Index s = 1; s < S; ++s) {
        trial[s] = res.poses[s].retract(dx.segment<6>(6 * (s - 1)));
      }
      const double trial_cost = cost_at(scans, trial, map, keys);
      if (std::isfinite(trial_cost) && trial_cost <= sys.cost) {
        res.poses = std::move(trial);
        res.accepted_costs.push_back(trial_cost);
        lambda = std::max(lambda * cfg.lambda_down, 1e-12);
        accepted_any = true;
        rejects = 0;
        ++inner;
        const double prev = sys.cost;
        sys = linearize(scans, res.poses, map, keys);
        if (prev - trial_cost <= cfg.cost_tolerance * prev) break;
      } else {
        lambda *= cfg.lambda_up;
        ++rejects;
      }
    }
    res.outer_iterations = outer + 1;
    last_cost = sys.cost;

    if (!accepted_any && rejects >= cfg.max_reject && grad_norm > 1e-6 * (1.0 + sys.cost)) {
      res.diverged = true;
      res.message = "LM rejected " + std::to_string(rejects) +
                    " consecutive steps with non-zero gradient; returning last valid poses";
      break;
    }

    double max_step = 0.0;
    for (std::size_t s = 0; s < scans.size(); ++s) {
      max_step = std::max({max_step, translation_distance(start[s], res.poses[s]),
                           rotation_angle(start[s], res.poses[s])});
    }
    if (max_step < cfg.pose_tolerance ||
        outer_start_cost - sys.cost <= cfg.cost_tolerance * outer_start_cost) {
      settled = true;
      break;
    }
  }

  const auto final_map = build_plane_voxel_map(scans, res.poses, cfg.map);
  res.final_cost = point_to_plane_cost(scans, res.poses, final_map);
  res.features = extract_plane_features(scans, res.poses, final_map, cfg.feature_stride);
  if (res.message.empty()) {
    res.message = settled ? "converged after " + std::to_string(res.outer_iterations) +
                                " outer iterations"
                          : "stopped at the outer iteration limit (" +
                                std::to_string(res.outer_iterations) + ")";
  }
  return res;
}

Pose propagate_camera_pose(const Pose& T_C, const Pose& T_L, const Pose& T_L_opt) {
  return T_L_opt * T_L.inverse() * T_C;
}

std::size_t nearest_in_time(const std::vector<double>& stamps, double t) {
  if (stamps.empty()) throw InvalidArgument("nearest_in_time: empty timestamp list");
  std::size_t best = 0;
  double best_dt = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < stamps.size(); ++i) {
    const double dt = std::abs(stamps[i] - t);
    if (dt < best_dt) {
      best_dt = dt;
      best = i;
    }
  }
  return best;
}

}  // namespace lvba
