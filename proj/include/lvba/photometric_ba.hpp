#pragma once

#include "lvba/geometry.hpp"
#include "lvba/global_visibility.hpp"
#include "lvba/homography.hpp"
#include "lvba/lidar_ba.hpp"
#include "lvba/scene_points.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lvba {

/// Per-frame optimization variable: pose and relative exposure (> 0).
struct CameraState {
  Pose pose;
  double exposure = 1.0;
};

struct SolverConfig {
  int max_iters = 50;  // per pyramid level
  double lambda_init = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.5;
  int max_reject = 10;
  double cost_tolerance = 1e-6;  // relative cost decrease
  double step_tolerance = 1e-6;  // parameter step norm
  double huber = 0.05;           // on the covariance-weighted per-pixel RGB residual norm
  int levels = 3;
  int patch_size = 8;
};

/// One photometric term: scene point `point` sampled on frame `ref` and
/// compared against frame `target` at pyramid `level`.
struct CostItem {
  std::size_t point = 0;
  int ref = 0;
  int target = 0;
  Vec3 p = Vec3::Zero();
  Vec3 n = Vec3::UnitZ();
  Patch patch;
  int level = 0;
};

/// Stacked per-pixel RGB differences (3 N^2 rows) and the scalar
/// covariance weight eps_r^2 + eps_t^2 multiplying the squared norm.
struct PhotometricResidual {
  Eigen::VectorXd r;
  double weight = 0.0;
};

/// Residual plus the 3N^2 x 14 Jacobian with columns
/// [ref rho(3), ref phi(3), ref log-exposure, tgt rho(3), tgt phi(3), tgt log-exposure];
/// pose columns are right-multiplied SE(3) increments.
struct ItemLinearization {
  Eigen::VectorXd r;
  Eigen::Matrix<double, Eigen::Dynamic, 14> J;
  double weight = 0.0;
};

/// Residual of one cost item; std::nullopt when the warp is degenerate
/// (plane through the reference center, target behind the camera, or any
/// warped pixel outside the target image).
std::optional<PhotometricResidual> photometric_residual(const CameraState& ref,
                                                        const CameraState& tgt,
                                                        const CostItem& item,
                                                        const Image& target_image,
                                                        const Intrinsics& K);

std::optional<ItemLinearization> linearize_item(const CameraState& ref, const CameraState& tgt,
                                                const CostItem& item, const Image& target_image,
                                                const Intrinsics& K);

/// Huber-robustified cost of a residual: sum over pixels of rho(w |r_i|^2).
double robust_item_cost(const PhotometricResidual& res, double huber);

/// One CostItem per (scene point, target) pair; patches are generated on the
/// reference image of the given level at the current reference pose.
std::vector<CostItem> build_problem(std::span<const CameraState> states,
                                    std::span<const ScenePoint> points,
                                    std::span<const VisibilityRecord> records,
                                    std::span<const Image> images, const Intrinsics& K,
                                    int patch_size, int level);

/// Parameters held constant by the solver.
struct FrameMask {
  std::vector<char> pose_fixed;
  std::vector<char> exposure_fixed;
};

/// Frames without any cost item are fixed completely. Within each connected
/// component of the frame co-observation graph one exposure is pinned: frame
/// 0 for its component, otherwise the lowest frame index. With
/// estimate_exposure = false every exposure is fixed.
FrameMask gauge_mask(std::size_t frame_count, std::span<const CostItem> items,
                     bool estimate_exposure);

struct IterationLog {
  int level = 0;
  int iteration = 0;
  double cost_before = 0.0;
  double cost_after = 0.0;
  double lambda = 0.0;
  double step_norm = 0.0;
  std::size_t active_items = 0;
  bool accepted = false;
};

struct SolveReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::string termination;
  std::vector<IterationLog> log;
};

/// Total robustified cost over all active items.
struct CostSummary {
  double cost = 0.0;
  std::size_t active = 0;
};
CostSummary total_cost(std::span<const CameraState> states, std::span<const CostItem> items,
                       std::span<const Image> images, const Intrinsics& K, double huber);

/// Gradient of the robustified cost (7 entries per frame, no masking).
Eigen::VectorXd cost_gradient(std::span<const CameraState> states,
                              std::span<const CostItem> items, std::span<const Image> images,
                              const Intrinsics& K, double huber);

/// Levenberg-Marquardt on poses and log-exposures. Throws OptimizationError
/// naming the frames if the undamped system is rank deficient on the free
/// parameters.
std::vector<CameraState> lm_solve(std::span<const CameraState> states,
                                  std::span<const CostItem> items, std::span<const Image> images,
                                  const Intrinsics& K, const SolverConfig& cfg,
                                  const FrameMask& mask, SolveReport* report = nullptr,
                                  int level = 0);

struct VisualBaConfig {
  ScenePointConfig points;
  SolverConfig solver;
  VisibilityMapConfig visibility;
  bool use_global = true;
  bool estimate_exposure = true;
};

/// Everything the visual BA reads besides the camera states.
struct VisualBaInputs {
  std::vector<Pyramid> pyramids;  // one per camera frame
  std::vector<PlaneFeature> features;
  std::vector<Vec3> scan_positions;  // indexed by PlaneFeature::scan
  PlaneSupport support;
  VisibilityVoxelMap vmap;
};

struct LevelReport {
  int level = 0;
  std::size_t local_points = 0;
  std::size_t global_points = 0;
  std::size_t items = 0;
  std::size_t global_items = 0;
  double cost_start = 0.0;
  double cost_end = 0.0;
  SolveReport exposure_solve;  // coarsest level only: exposures with poses held
  SolveReport solve;
};

struct VisualBaReport {
  std::vector<LevelReport> levels;
};

/// Scene points, local and (optionally) global visibility for one level.
struct LevelProblem {
  std::vector<ScenePoint> points;
  std::vector<VisibilityRecord> records;
  std::vector<CostItem> items;
  std::size_t global_points = 0;
  std::size_t global_items = 0;
};

LevelProblem prepare_level(std::span<const CameraState> states, const VisualBaInputs& inputs,
                           const VisualBaConfig& cfg, int level);

/// Coarsest level first: regenerate scene points and visibility at the
/// current states, build the problem and solve; returns level-0 states.
/// With exposure estimation on, the coarsest level starts with an
/// exposure-only solve.
std::vector<CameraState> coarse_to_fine(std::span<const CameraState> states,
                                        const VisualBaInputs& inputs, const VisualBaConfig& cfg,
                                        VisualBaReport* report = nullptr);

}  // namespace lvba
