#include "lvba/scene_points.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace lvba {

int gaussian_radius(double sigma) { return static_cast<int>(std::ceil(3.0 * sigma)); }

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int r = gaussian_radius(sigma);
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + r];
  }
  for (auto& v : k) v /= sum;
  return k;
}

GrayImage blur(const GrayImage& g, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  GrayImage tmp = g, out = g;
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * g.at(std::clamp(x + i, 0, g.width - 1), y);
      tmp.at(x, y) = s;
    }
  }
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.at(x, std::clamp(y + i, 0, g.height - 1));
      out.at(x, y) = s;
    }
  }
  return out;
}

}  // namespace

GrayImage dog_image(const Image& img, double sigma1, double sigma2) {
  const GrayImage g = to_gray(img);
  const GrayImage b1 = blur(g, sigma1);
  const GrayImage b2 = blur(g, sigma2);
  const int r = std::max(gaussian_radius(sigma1), gaussian_radius(sigma2));
  GrayImage out;
  out.width = g.width;
  out.height = g.height;
  out.data.assign(g.data.size(), 0.0);
  for (int y = r; y < g.height - r; ++y)
    for (int x = r; x < g.width - r; ++x) out.at(x, y) = std::abs(b1.at(x, y) - b2.at(x, y));
  return out;
}

double dog_score(const Image& img, const Vec2& u, double sigma1, double sigma2) {
  const int x = static_cast<int>(std::lround(u.x()));
  const int y = static_cast<int>(std::lround(u.y()));
  const int r = std::max(gaussian_radius(sigma1), gaussian_radius(sigma2));
  if (x < r || y < r || x >= img.width() - r || y >= img.height() - r) return 0.0;
  const auto k1 = gaussian_kernel(sigma1);
  const auto k2 = gaussian_kernel(sigma2);
  const int r1 = gaussian_radius(sigma1), r2 = gaussian_radius(sigma2);
  double g1 = 0.0, g2 = 0.0;
  for (int dy = -r2; dy <= r2; ++dy) {
    for (int dx = -r2; dx <= r2; ++dx) {
      const double v = img.gray(x + dx, y + dy);
      if (std::abs(dx) <= r1 && std::abs(dy) <= r1) g1 += k1[dx + r1] * k1[dy + r1] * v;
      g2 += k2[dx + r2] * k2[dy + r2] * v;
    }
  }
  return std::abs(g1 - g2);
}

PlaneSupport plane_support(std::span<const PlaneFeature> features, double voxel_size) {
  PlaneSupport s;
  s.voxel_size = voxel_size;
  for (const auto& f : features) s.planes.try_emplace(f.voxel_key, f.n_f, f.n_f.dot(f.p_f));
  return s;
}

namespace {

bool same_plane(const Vec3& n1, double d1, const Vec3& n2, double d2) {
  const double c = n1.dot(n2);
  return std::abs(c) >= 0.996 && std::abs(d1 - (c > 0.0 ? d2 : -d2)) <= 0.02;
}

// True if the ray c + tau d (unit d) crosses a supported plane other than
// the target one (n, offset) before tau reaches t_hit. Voxels without a plane of their own (edges, corners) borrow
// the planes of their neighbours.
bool occluded(const Vec3& c, const Vec3& d, double t_hit, const Vec3& n, double offset,
              const PlaneSupport& support) {
  const double h = 0.25 * support.voxel_size;
  const double margin = 0.002;
  const auto crosses = [&](const Vec3& a, const Vec3& b, const VoxelKey& k, const VoxelKey& from) {
    const auto it = support.planes.find(from);
    if (it == support.planes.end()) return false;
    const auto& [nv, dv] = it->second;
    if (same_plane(nv, dv, n, offset)) return false;
    const double sa = nv.dot(a) - dv, sb = nv.dot(b) - dv;
    if ((sa < 0.0) == (sb < 0.0)) return false;
    return voxel_key(a + (sa / (sa - sb)) * (b - a), support.voxel_size) == k;
  };
  double t0 = 0.0;
  while (t0 < t_hit - margin) {
    const double t1 = std::min(t0 + h, t_hit - margin);
    const Vec3 a = c + t0 * d, b = c + t1 * d;
    for (const Vec3* q : {&a, &b}) {
      const VoxelKey k = voxel_key(*q, support.voxel_size);
      if (support.planes.contains(k)) {
        if (crosses(a, b, k, k)) return true;
        continue;
      }
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dz = -1; dz <= 1; ++dz)
            if (crosses(a, b, k, {k.x + dx, k.y + dy, k.z + dz})) return true;
    }
    t0 = t1;
  }
  return false;
}

}  // namespace

bool patch_supported(const Vec3& p, const Vec3& n, const Pose& pose, const Intrinsics& K,
                     int patch_size, const PlaneSupport& support) {
  const auto u = project(K, pose, p);
  if (!u) return false;
  const double cx = std::round(u->x()), cy = std::round(u->y());
  const double lo = -patch_size / 2, hi = patch_size / 2 - 1;
  const Vec2 probes[] = {{cx, cy}, {cx + lo, cy + lo}, {cx + hi, cy + lo}, {cx + lo, cy + hi},
                         {cx + hi, cy + hi}};
  const Mat3 R = pose.rotation();
  const Vec3& c = pose.translation();
  const Mat3 Kinv = K.K_inv();
  for (const auto& q : probes) {
    const Vec3 d = R * (Kinv * Vec3(q.x(), q.y(), 1.0));
    const double den = n.dot(d);
    if (std::abs(den) < 1e-12) return false;
    const double t = n.dot(p - c) / den;
    if (t <= 0.0) return false;
    const Vec3 x = c + t * d;
    // Surfaces often lie on voxel faces; accept support from either side.
    bool ok = false;
    for (const double off : {0.0, 0.05, -0.05}) {
      const auto it = support.planes.find(voxel_key(x + off * n, support.voxel_size));
      if (it == support.planes.end()) continue;
      const auto& [nv, dv] = it->second;
      if (std::abs(nv.dot(n)) >= 0.996 && std::abs(nv.dot(x) - dv) <= 0.02) {
        ok = true;
        break;
      }
    }
    if (!ok || occluded(c, d.normalized(), t * d.norm(), n, n.dot(p), support)) return false;
  }
  return true;
}

std::vector<ScenePoint> generate_local_scene_points(int frame_idx, const GrayImage& dog,
                                                    const Intrinsics& K,
                                                    const Pose& pose,
                                                    std::span<const PlaneFeature> features,
                                                    const ScenePointConfig& cfg, int cell,
                                                    const PlaneSupport* support) {
  const Vec3 t_c = pose.translation();
  const int half = cfg.patch_size / 2;
  const int cols = (K.width + cell - 1) / cell;
  // cell index -> (score, feature index); ties keep the lower feature index.
  std::map<int, std::pair<double, std::size_t>> best;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    const Vec3 d = f.p_f - t_c;
    const double dist = d.norm();
    if (dist <= 0.0 || std::abs(f.n_f.dot(d) / dist) <= cfg.alpha0) continue;
    const auto u = project(K, pose, f.p_f);
    if (!u) continue;
    const double rx = std::round(u->x()), ry = std::round(u->y());
    if (rx - half < 0 || ry - half < 0 || rx + half > K.width - 1 || ry + half > K.height - 1) {
      continue;
    }
    const double score = dog.at(static_cast<int>(rx), static_cast<int>(ry));
    const int c = static_cast<int>(u->y() / cell) * cols + static_cast<int>(u->x() / cell);
    auto it = best.find(c);
    if (it != best.end() && !(score > it->second.first)) continue;
    if (support && !patch_supported(f.p_f, f.n_f, pose, K, cfg.patch_size, *support)) continue;
    best[c] = {score, i};
  }
  std::vector<ScenePoint> out;
  for (const auto& [c, entry] : best) {
    if (!(entry.first > cfg.min_score)) continue;
    const auto& f = features[entry.second];
    ScenePoint sp;
    sp.p = f.p_f;
    sp.n = f.n_f;
    sp.ref_frame = frame_idx;
    sp.dog_score = entry.first;
    out.push_back(sp);
  }
  return out;
}

std::vector<ScenePoint> generate_local_scene_points(int frame_idx, const Image& img,
                                                    const Intrinsics& K, const Pose& pose,
                                                    std::span<const PlaneFeature> features,
                                                    const ScenePointConfig& cfg) {
  const GrayImage dog = dog_image(img, cfg.sigma1, cfg.sigma2);
  return generate_local_scene_points(frame_idx, dog, K, pose, features, cfg, cfg.cell);
}

std::vector<PlaneFeature> features_near(std::span<const PlaneFeature> features,
                                        std::span<const Vec3> scan_positions,
                                        const Vec3& camera_pos, double radius) {
  std::vector<char> near(scan_positions.size(), 0);
  for (std::size_t s = 0; s < scan_positions.size(); ++s) {
    near[s] = (scan_positions[s] - camera_pos).norm() <= radius;
  }
  std::vector<PlaneFeature> out;
  for (const auto& f : features) {
    if (f.scan >= 0 && static_cast<std::size_t>(f.scan) < near.size() && near[f.scan]) {
      out.push_back(f);
    }
  }
  return out;
}

double ncc(std::span<const Vec3> a, std::span<const Vec3> b) {
  const std::size_t n = std::min(a.size(), b.size());
  if (n < 2) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i].mean();
    mb += b[i].mean();
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i].mean() - ma;
    const double db = b[i].mean() - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 1e-14 || sbb <= 1e-14) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

bool passes_visibility_checks(const ScenePoint& sp, int target, std::span<const Pose> poses,
                              std::span<const Image> images, const Intrinsics& K,
                              const ScenePointConfig& cfg) {
  const Pose& T_t = poses[target];
  const Pose& T_r = poses[sp.ref_frame];
  const Vec3 diff = sp.p - T_t.translation();
  const double dist = diff.norm();
  if (dist <= 0.0) return false;
  const Vec3 d = diff / dist;
  if (!(std::abs(d.dot(T_t.z_axis())) > cfg.alpha1)) return false;
  if (!(std::abs(d.dot(sp.n)) > cfg.alpha2)) return false;
  // Both cameras must face the same side of the surface.
  if (sp.n.dot(T_t.translation() - sp.p) * sp.n.dot(T_r.translation() - sp.p) <= 0.0) return false;

  const auto u_r = project(K, T_r, sp.p);
  if (!u_r) return false;
  const auto patch = make_patch(images[sp.ref_frame], *u_r, cfg.patch_size);
  if (!patch) return false;
  const auto H = oriented_homography(T_r, T_t, sp.p, sp.n, K);
  if (!H) return false;
  const auto warped = warp_patch(*H, patch->pixels, &K);
  if (!warped) return false;
  std::vector<Vec3> tgt;
  tgt.reserve(warped->size());
  for (const auto& u : *warped) tgt.push_back(sample_bilinear(images[target], u));
  return ncc(patch->colors, tgt) > cfg.alpha3;
}

std::vector<int> sliding_window(int ref, int window_size, int frame_count) {
  std::vector<int> w;
  for (int j = std::max(0, ref - window_size); j <= std::min(frame_count - 1, ref + window_size);
       ++j) {
    if (j != ref) w.push_back(j);
  }
  return w;
}

VisibilityRecord determine_local_visibility(const ScenePoint& sp, std::size_t point_index,
                                            std::span<const int> window,
                                            std::span<const Pose> poses,
                                            std::span<const Image> images, const Intrinsics& K,
                                            const ScenePointConfig& cfg) {
  VisibilityRecord rec;
  rec.point = point_index;
  for (int j : window) {
    if (j == sp.ref_frame) continue;
    if (passes_visibility_checks(sp, j, poses, images, K, cfg)) rec.targets.push_back(j);
  }
  return rec;
}

}  // namespace lvba
