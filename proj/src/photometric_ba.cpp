#include "lvba/photometric_ba.hpp"

#include "lvba/errors.hpp"
#include "lvba/parallel.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace lvba {

namespace {

using Mat7 = Eigen::Matrix<double, 7, 7>;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat32 = Eigen::Matrix<double, 3, 2>;

/// Shared evaluation of one item. When J is non-null it is filled too.
bool evaluate_item(const CameraState& ref, const CameraState& tgt, const CostItem& item,
                   const Image& img, const Intrinsics& K, Eigen::VectorXd& r,
                   Eigen::Matrix<double, Eigen::Dynamic, 14>* J) {
  const Mat3 R_r = ref.pose.rotation();
  const Mat3 R_t = tgt.pose.rotation();
  const Vec3& t_r = ref.pose.translation();
  const Vec3& t_t = tgt.pose.translation();
  const Vec3& n = item.n;
  const double a = n.dot(item.p - t_r);
  if (std::abs(a) < kDepthEps) return false;
  const double sign = a > 0.0 ? 1.0 : -1.0;
  const Mat3 Kinv = K.K_inv();
  const double inv_er = 1.0 / ref.exposure;
  const double inv_et = 1.0 / tgt.exposure;
  const Vec3 baseline = t_r - t_t;
  const Mat3 Rt_T = R_t.transpose();

  const std::size_t npix = item.patch.pixels.size();
  r.resize(3 * static_cast<Eigen::Index>(npix));
  if (J) J->resize(3 * static_cast<Eigen::Index>(npix), 14);

  Mat3 dw_dphi_r_left;
  Mat3 dw_drho_r;
  if (J) dw_dphi_r_left = a * Mat3::Identity() + baseline * n.transpose();

  for (std::size_t i = 0; i < npix; ++i) {
    const Vec2& ur = item.patch.pixels[i];
    const Vec3 b = Kinv * Vec3(ur.x(), ur.y(), 1.0);
    const Vec3 x = R_r * b;
    const double s = n.dot(x);
    const Vec3 w = a * x + baseline * s;
    const Vec3 q = Rt_T * w;
    // q is s times the target-camera coordinates of the ray-plane hit; the
    // sign of s matches the sign of a for hits in front of the reference.
    if (!(sign * q.z() > kDepthEps * std::abs(s) + 1e-300)) return false;
    const double iz = 1.0 / q.z();
    const Vec2 ut(K.fx * q.x() * iz + K.cx, K.fy * q.y() * iz + K.cy);
    if (!K.contains(ut)) return false;

    const auto row = 3 * static_cast<Eigen::Index>(i);
    const Vec3& c_r = item.patch.colors[i];
    if (!J) {
      const Vec3 c_t = sample_cubic(img, ut);
      r.segment<3>(row) = inv_et * c_t - inv_er * c_r;
      continue;
    }
    Mat32 G;
    const Vec3 c_t = sample_cubic(img, ut, G);
    r.segment<3>(row) = inv_et * c_t - inv_er * c_r;

    Mat23 du_dq;
    du_dq << K.fx * iz, 0.0, -K.fx * q.x() * iz * iz, 0.0, K.fy * iz, -K.fy * q.y() * iz * iz;
    const Mat3 dr_dq = inv_et * G * du_dq;
    const Mat3 dr_dw = dr_dq * Rt_T;

    dw_drho_r = (s * Mat3::Identity() - x * n.transpose()) * R_r;
    const Mat3 dw_dphi_r = dw_dphi_r_left * (-R_r * hat(b));

    auto Jr = J->middleRows<3>(row);
    Jr.block<3, 3>(0, 0) = dr_dw * dw_drho_r;
    Jr.block<3, 3>(0, 3) = dr_dw * dw_dphi_r;
    Jr.col(6) = inv_er * c_r;
    Jr.block<3, 3>(0, 7) = -s * dr_dq;
    Jr.block<3, 3>(0, 10) = dr_dq * hat(q);
    Jr.col(13) = -inv_et * c_t;
  }
  return true;
}

double huber_rho(double e2, double k) {
  if (e2 <= k * k) return e2;
  return 2.0 * k * std::sqrt(e2) - k * k;
}

double huber_weight(double e2, double k) {
  if (e2 <= k * k) return 1.0;
  return k / std::sqrt(e2);
}

struct BlockSystem {
  std::map<std::pair<int, int>, Mat7> blocks;  // (i, j) with i <= j
  std::vector<Vec7> g;
  double cost = 0.0;
  std::size_t active = 0;

  explicit BlockSystem(std::size_t frames) : g(frames, Vec7::Zero()) {}

  void add_block(int i, int j, const Mat7& m) {
    if (i <= j) {
      auto [it, inserted] = blocks.try_emplace({i, j}, m);
      if (!inserted) it->second += m;
    } else {
      add_block(j, i, m.transpose());
    }
  }

  void merge(const BlockSystem& o) {
    for (const auto& [k, m] : o.blocks) add_block(k.first, k.second, m);
    for (std::size_t f = 0; f < g.size(); ++f) g[f] += o.g[f];
    cost += o.cost;
    active += o.active;
  }
};

BlockSystem linearize_all(std::span<const CameraState> states, std::span<const CostItem> items,
                          std::span<const Image> images, const Intrinsics& K, double huber) {
  std::vector<BlockSystem> partial(kReductionChunks, BlockSystem(states.size()));
  parallel_chunks(items.size(), [&](std::size_t c, std::size_t b, std::size_t e) {
    auto& sys = partial[c];
    for (std::size_t k = b; k < e; ++k) {
      const auto& it = items[k];
      auto lin = linearize_item(states[it.ref], states[it.target], it, images[it.target], K);
      if (!lin) continue;
      const Eigen::Index npix = lin->r.size() / 3;
      Eigen::VectorXd wts(lin->r.size());
      double cost = 0.0;
      for (Eigen::Index i = 0; i < npix; ++i) {
        const double e2 = lin->weight * lin->r.segment<3>(3 * i).squaredNorm();
        cost += huber_rho(e2, huber);
        wts.segment<3>(3 * i).setConstant(lin->weight * huber_weight(e2, huber));
      }
      const Eigen::Matrix<double, 14, 14> H = lin->J.transpose() * wts.asDiagonal() * lin->J;
      const Eigen::Matrix<double, 14, 1> g = lin->J.transpose() * wts.cwiseProduct(lin->r);
      sys.add_block(it.ref, it.ref, H.topLeftCorner<7, 7>());
      sys.add_block(it.target, it.target, H.bottomRightCorner<7, 7>());
      sys.add_block(it.ref, it.target, H.topRightCorner<7, 7>());
      sys.g[it.ref] += g.head<7>();
      sys.g[it.target] += g.tail<7>();
      sys.cost += cost;
      ++sys.active;
    }
  });
  BlockSystem total(states.size());
  for (const auto& p : partial) total.merge(p);
  return total;
}

/// Cost at `trial`; items that turn degenerate keep their cost at `fallback`.
CostSummary cost_with_fallback(std::span<const CameraState> trial,
                               std::span<const CameraState> fallback,
                               std::span<const CostItem> items, std::span<const Image> images,
                               const Intrinsics& K, double huber) {
  std::vector<CostSummary> partial(kReductionChunks);
  parallel_chunks(items.size(), [&](std::size_t c, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const auto& it = items[k];
      auto res = photometric_residual(trial[it.ref], trial[it.target], it, images[it.target], K);
      if (!res) {
        res = photometric_residual(fallback[it.ref], fallback[it.target], it, images[it.target], K);
        if (!res) continue;
      }
      partial[c].cost += robust_item_cost(*res, huber);
      ++partial[c].active;
    }
  });
  CostSummary total;
  for (const auto& p : partial) {
    total.cost += p.cost;
    total.active += p.active;
  }
  return total;
}

}  // namespace

std::optional<PhotometricResidual> photometric_residual(const CameraState& ref,
                                                        const CameraState& tgt,
                                                        const CostItem& item,
                                                        const Image& target_image,
                                                        const Intrinsics& K) {
  PhotometricResidual res;
  if (!evaluate_item(ref, tgt, item, target_image, K, res.r, nullptr)) return std::nullopt;
  res.weight = ref.exposure * ref.exposure + tgt.exposure * tgt.exposure;
  return res;
}

std::optional<ItemLinearization> linearize_item(const CameraState& ref, const CameraState& tgt,
                                                const CostItem& item, const Image& target_image,
                                                const Intrinsics& K) {
  ItemLinearization lin;
  if (!evaluate_item(ref, tgt, item, target_image, K, lin.r, &lin.J)) return std::nullopt;
  lin.weight = ref.exposure * ref.exposure + tgt.exposure * tgt.exposure;
  return lin;
}

double robust_item_cost(const PhotometricResidual& res, double huber) {
  double cost = 0.0;
  for (Eigen::Index i = 0; i < res.r.size() / 3; ++i) {
    cost += huber_rho(res.weight * res.r.segment<3>(3 * i).squaredNorm(), huber);
  }
  return cost;
}

std::vector<CostItem> build_problem(std::span<const CameraState> states,
                                    std::span<const ScenePoint> points,
                                    std::span<const VisibilityRecord> records,
                                    std::span<const Image> images, const Intrinsics& K,
                                    int patch_size, int level) {
  std::vector<CostItem> items;
  for (const auto& rec : records) {
    if (rec.targets.empty()) continue;
    const ScenePoint& sp = points[rec.point];
    const auto u = project(K, states[sp.ref_frame].pose, sp.p);
    if (!u) continue;
    auto patch = make_patch(images[sp.ref_frame], *u, patch_size);
    if (!patch) continue;
    for (int j : rec.targets) {
      if (j == sp.ref_frame) continue;
      CostItem it;
      it.point = rec.point;
      it.ref = sp.ref_frame;
      it.target = j;
      it.p = sp.p;
      it.n = sp.n;
      it.patch = *patch;
      it.level = level;
      items.push_back(std::move(it));
    }
  }
  return items;
}

FrameMask gauge_mask(std::size_t frame_count, std::span<const CostItem> items,
                     bool estimate_exposure) {
  std::vector<int> parent(frame_count);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<char> used(frame_count, 0);
  for (const auto& it : items) {
    used[it.ref] = used[it.target] = 1;
    const int a = find(it.ref), b = find(it.target);
    // Union toward the smaller index so every root is its component's minimum.
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  FrameMask mask;
  mask.pose_fixed.assign(frame_count, 0);
  mask.exposure_fixed.assign(frame_count, 0);
  for (std::size_t f = 0; f < frame_count; ++f) {
    const bool root = find(static_cast<int>(f)) == static_cast<int>(f);
    mask.pose_fixed[f] = !used[f];
    mask.exposure_fixed[f] = !estimate_exposure || !used[f] || root;
  }
  return mask;
}

CostSummary total_cost(std::span<const CameraState> states, std::span<const CostItem> items,
                       std::span<const Image> images, const Intrinsics& K, double huber) {
  return cost_with_fallback(states, states, items, images, K, huber);
}

Eigen::VectorXd cost_gradient(std::span<const CameraState> states,
                              std::span<const CostItem> items, std::span<const Image> images,
                              const Intrinsics& K, double huber) {
  const BlockSystem sys = linearize_all(states, items, images, K, huber);
  Eigen::VectorXd g(7 * static_cast<Eigen::Index>(states.size()));
  for (std::size_t f = 0; f < states.size(); ++f) g.segment<7>(7 * f) = 2.0 * sys.g[f];
  return g;
}

namespace {

std::vector<CameraState> apply_step(std::span<const CameraState> states,
                                    const std::vector<Eigen::Index>& column,
                                    const Eigen::VectorXd& dx) {
  std::vector<CameraState> out(states.begin(), states.end());
  for (std::size_t f = 0; f < states.size(); ++f) {
    Vec6 xi = Vec6::Zero();
    bool any = false;
    for (int k = 0; k < 6; ++k) {
      const auto c = column[7 * f + k];
      if (c >= 0) {
        xi[k] = dx[c];
        any = true;
      }
    }
    if (any) out[f].pose = states[f].pose.retract(xi);
    const auto ce = column[7 * f + 6];
    if (ce >= 0) out[f].exposure = states[f].exposure * std::exp(dx[ce]);
  }
  return out;
}

/// Diagonal of the undamped normal matrix per free column.
Eigen::VectorXd normal_diagonal(const BlockSystem& sys, const std::vector<Eigen::Index>& column,
                                Eigen::Index n) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  for (const auto& [key, m] : sys.blocks) {
    if (key.first != key.second) continue;
    for (int a = 0; a < 7; ++a) {
      const auto c = column[7 * key.first + a];
      if (c >= 0) d[c] = m(a, a);
    }
  }
  return d;
}

/// Columns whose diagonal carries no information are pinned for this
/// iteration (unit diagonal, no coupling, zero gradient).
std::vector<char> idle_columns(const Eigen::VectorXd& diag) {
  const double dmax = diag.size() ? diag.maxCoeff() : 0.0;
  std::vector<char> idle(diag.size(), 0);
  for (Eigen::Index i = 0; i < diag.size(); ++i) idle[i] = !(diag[i] > 1e-12 * dmax);
  return idle;
}

/// Items can turn inactive between iterations and split the co-observation
/// graph; every active component without a fixed exposure gets its
/// lowest-index exposure pinned for this iteration.
void pin_exposure_gauge(const BlockSystem& sys, const std::vector<Eigen::Index>& column,
                        std::vector<char>& idle) {
  const auto frames = static_cast<int>(column.size() / 7);
  std::vector<int> parent(frames);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<char> active(frames, 0);
  for (const auto& [key, m] : sys.blocks) {
    active[key.first] = active[key.second] = 1;
    const int a = find(key.first), b = find(key.second);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<char> anchored(frames, 0);
  for (int f = 0; f < frames; ++f) {
    const auto c = column[7 * f + 6];
    if (active[f] && (c < 0 || idle[c])) anchored[find(f)] = 1;
  }
  for (int f = 0; f < frames; ++f) {
    if (!active[f] || find(f) != f || anchored[f]) continue;
    idle[column[7 * f + 6]] = 1;  // roots are component minima
  }
}

/// Lower triangle of H + lambda diag(H) over free columns, optionally Jacobi
/// scaled by `scale`.
Eigen::SparseMatrix<double> assemble(const BlockSystem& sys,
                                     const std::vector<Eigen::Index>& column, Eigen::Index n,
                                     double lambda, const std::vector<char>& idle,
                                     const Eigen::VectorXd* scale = nullptr) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(sys.blocks.size() * 49 * 2 + static_cast<std::size_t>(n));
  for (const auto& [key, m] : sys.blocks) {
    const auto [fi, fj] = key;
    for (int a = 0; a < 7; ++a) {
      const auto ca = column[7 * fi + a];
      if (ca < 0 || idle[ca]) continue;
      for (int b = 0; b < 7; ++b) {
        const auto cb = column[7 * fj + b];
        if (cb < 0 || idle[cb]) continue;
        double v = m(a, b);
        if (fi == fj && a == b) v += lambda * m(a, a);
        if (scale) v *= (*scale)[ca] * (*scale)[cb];
        if (ca >= cb) trip.emplace_back(ca, cb, v);
        if (fi != fj && cb >= ca) trip.emplace_back(cb, ca, v);
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (idle[i]) trip.emplace_back(i, i, 1.0);
  }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

using Ldlt = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                                  Eigen::NaturalOrdering<int>>;

}  // namespace

std::vector<CameraState> lm_solve(std::span<const CameraState> states,
                                  std::span<const CostItem> items, std::span<const Image> images,
                                  const Intrinsics& K, const SolverConfig& cfg,
                                  const FrameMask& mask, SolveReport* report, int level) {
  const std::size_t frames = states.size();
  if (mask.pose_fixed.size() != frames || mask.exposure_fixed.size() != frames) {
    throw InvalidArgument("lm_solve: mask size does not match frame count");
  }
  std::vector<Eigen::Index> column(7 * frames, -1);
  std::vector<int> param_frame;
  for (std::size_t f = 0; f < frames; ++f) {
    for (int k = 0; k < 7; ++k) {
      const bool fixed = k < 6 ? mask.pose_fixed[f] : mask.exposure_fixed[f];
      if (fixed) continue;
      column[7 * f + k] = static_cast<Eigen::Index>(param_frame.size());
      param_frame.push_back(static_cast<int>(f));
    }
  }
  const auto n = static_cast<Eigen::Index>(param_frame.size());

  std::vector<CameraState> cur(states.begin(), states.end());
  SolveReport local;
  SolveReport& rep = report ? *report : local;
  rep = SolveReport{};

  BlockSystem sys = linearize_all(cur, items, images, K, cfg.huber);
  rep.initial_cost = rep.final_cost = sys.cost;
  if (sys.active == 0) {
    rep.termination = "no active cost items";
    return cur;
  }
  if (n == 0) {
    rep.termination = "no free parameters";
    return cur;
  }

  {
    // Pivots of the Jacobi-scaled undamped system; a vanishing pivot marks a
    // direction no cost item constrains.
    const Eigen::VectorXd diag = normal_diagonal(sys, column, n);
    const std::vector<char> none(static_cast<std::size_t>(n), 0);
    std::vector<int> bad;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(diag[i] > 0.0)) bad.push_back(param_frame[i]);
    }
    if (bad.empty()) {
      const Eigen::VectorXd scale = diag.cwiseSqrt().cwiseInverse();
      Ldlt check(assemble(sys, column, n, 0.0, none, &scale));
      if (check.info() == Eigen::Success) {
        const Eigen::VectorXd D = check.vectorD();
        for (Eigen::Index i = 0; i < n; ++i) {
          if (!(D[i] > 1e-10)) bad.push_back(param_frame[i]);
        }
      } else {
        bad.assign(param_frame.begin(), param_frame.end());
      }
    }
    if (!bad.empty()) {
      std::sort(bad.begin(), bad.end());
      bad.erase(std::unique(bad.begin(), bad.end()), bad.end());
      std::ostringstream msg;
      msg << "rank-deficient photometric system at level " << level
          << "; unconstrained frames:";
      for (int f : bad) msg << ' ' << f;
      throw OptimizationError(msg.str());
    }
  }

  double lambda = cfg.lambda_init;
  int rejects = 0;
  rep.termination = "max iterations";
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    std::vector<char> idle = idle_columns(normal_diagonal(sys, column, n));
    pin_exposure_gauge(sys, column, idle);
    Eigen::VectorXd g(n);
    for (std::size_t f = 0; f < frames; ++f) {
      for (int k = 0; k < 7; ++k) {
        const auto c = column[7 * f + k];
        if (c >= 0) g[c] = idle[c] ? 0.0 : sys.g[f][k];
      }
    }

    Ldlt solver(assemble(sys, column, n, lambda, idle));
    IterationLog entry;
    entry.level = level;
    entry.iteration = iter;
    entry.cost_before = sys.cost;
    entry.lambda = lambda;
    entry.active_items = sys.active;
    if (solver.info() != Eigen::Success) {
      lambda *= cfg.lambda_up;
      entry.cost_after = sys.cost;
      rep.log.push_back(entry);
      if (++rejects >= cfg.max_reject) {
        rep.termination = "damped system not positive definite";
        break;
      }
      continue;
    }
    const Eigen::VectorXd dx = solver.solve(-g);
    entry.step_norm = dx.norm();
    auto trial = apply_step(cur, column, dx);
    const CostSummary tc = cost_with_fallback(trial, cur, items, images, K, cfg.huber);
    entry.cost_after = tc.cost;
    rep.iterations = iter + 1;
    if (tc.cost < sys.cost) {
      entry.accepted = true;
      rep.log.push_back(entry);
      const double rel = (sys.cost - tc.cost) / std::max(sys.cost, 1e-300);
      cur = std::move(trial);
      lambda = std::max(lambda * cfg.lambda_down, 1e-12);
      rejects = 0;
      sys = linearize_all(cur, items, images, K, cfg.huber);
      rep.final_cost = sys.cost;
      if (rel < cfg.cost_tolerance) {
        rep.termination = "relative cost change below tolerance";
        break;
      }
      if (entry.step_norm < cfg.step_tolerance) {
        rep.termination = "step norm below tolerance";
        break;
      }
    } else {
      rep.log.push_back(entry);
      lambda *= cfg.lambda_up;
      if (entry.step_norm < cfg.step_tolerance) {
        rep.termination = "step norm below tolerance";
        break;
      }
      if (++rejects >= cfg.max_reject) {
        rep.termination = "too many rejected steps";
        break;
      }
    }
  }
  return cur;
}

LevelProblem prepare_level(std::span<const CameraState> states, const VisualBaInputs& inputs,
                           const VisualBaConfig& cfg, int level) {
  const std::size_t frames = states.size();
  const Intrinsics& K = inputs.pyramids.at(0).levels.at(level).intrinsics;
  std::vector<Image> images;
  std::vector<Pose> poses;
  images.reserve(frames);
  poses.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    images.push_back(inputs.pyramids[f].levels.at(level).image);
    poses.push_back(states[f].pose);
  }
  const int cell = std::max(8, cfg.points.cell >> level);

  std::vector<std::vector<ScenePoint>> per_frame(frames);
  parallel_for(frames, [&](std::size_t f) {
    const auto near = features_near(inputs.features, inputs.scan_positions,
                                    poses[f].translation(), cfg.points.radius);
    const GrayImage dog = dog_image(images[f], cfg.points.sigma1, cfg.points.sigma2);
    per_frame[f] = generate_local_scene_points(static_cast<int>(f), dog, K, poses[f], near,
                                               cfg.points, cell, &inputs.support);
  });
  LevelProblem prob;
  for (auto& v : per_frame) prob.points.insert(prob.points.end(), v.begin(), v.end());

  std::vector<std::size_t> global;
  if (cfg.use_global) global = select_global_scene_points(prob.points, inputs.vmap, poses);
  prob.global_points = global.size();

  prob.records.resize(prob.points.size());
  parallel_for(prob.points.size(), [&](std::size_t i) {
    const auto& sp = prob.points[i];
    const auto window =
        sliding_window(sp.ref_frame, cfg.points.window_size, static_cast<int>(frames));
    prob.records[i] =
        determine_local_visibility(sp, i, window, poses, images, K, cfg.points);
  });
  std::vector<std::vector<int>> global_only(prob.points.size());
  parallel_for(global.size(), [&](std::size_t g) {
    const std::size_t i = global[g];
    auto rec = determine_global_visibility(prob.points[i], i, inputs.vmap, poses, images, K,
                                           cfg.points);
    auto& targets = prob.records[i].targets;
    for (int j : rec.targets) {
      if (std::find(targets.begin(), targets.end(), j) == targets.end()) {
        global_only[i].push_back(j);
      }
    }
  });
  for (std::size_t i = 0; i < prob.points.size(); ++i) {
    auto& targets = prob.records[i].targets;
    targets.insert(targets.end(), global_only[i].begin(), global_only[i].end());
    std::sort(targets.begin(), targets.end());
  }

  prob.items = build_problem(states, prob.points, prob.records, images, K, cfg.solver.patch_size,
                             level);
  for (const auto& it : prob.items) {
    const auto& g = global_only[it.point];
    if (std::find(g.begin(), g.end(), it.target) != g.end()) ++prob.global_items;
  }
  return prob;
}

std::vector<CameraState> coarse_to_fine(std::span<const CameraState> states,
                                        const VisualBaInputs& inputs, const VisualBaConfig& cfg,
                                        VisualBaReport* report) {
  if (inputs.pyramids.size() != states.size()) {
    throw InvalidArgument("coarse_to_fine: pyramid count does not match frame count");
  }
  std::vector<CameraState> cur(states.begin(), states.end());
  if (!cfg.estimate_exposure) {
    for (auto& s : cur) s.exposure = 1.0;
  }
  const int levels =
      std::min<int>(cfg.solver.levels, static_cast<int>(inputs.pyramids.at(0).levels.size()));
  for (int level = levels - 1; level >= 0; --level) {
    const LevelProblem prob = prepare_level(cur, inputs, cfg, level);
    std::vector<Image> images;
    images.reserve(cur.size());
    for (const auto& p : inputs.pyramids) images.push_back(p.levels[level].image);
    const Intrinsics& K = inputs.pyramids[0].levels[level].intrinsics;

    LevelReport lr;
    lr.level = level;
    lr.local_points = prob.points.size();
    lr.global_points = prob.global_points;
    lr.items = prob.items.size();
    lr.global_items = prob.global_items;
    const FrameMask mask = gauge_mask(cur.size(), prob.items, cfg.estimate_exposure);
    if (cfg.estimate_exposure && level == levels - 1) {
      // Exposures first, so brightness offsets are not absorbed by the poses.
      FrameMask exposure_only = mask;
      std::fill(exposure_only.pose_fixed.begin(), exposure_only.pose_fixed.end(), 1);
      cur = lm_solve(cur, prob.items, images, K, cfg.solver, exposure_only, &lr.exposure_solve,
                     level);
    }
    cur = lm_solve(cur, prob.items, images, K, cfg.solver, mask, &lr.solve, level);
    lr.cost_start = lr.solve.initial_cost;
    lr.cost_end = lr.solve.final_cost;
    if (report) report->levels.push_back(std::move(lr));
  }
  return cur;
}

}  // namespace lvba
