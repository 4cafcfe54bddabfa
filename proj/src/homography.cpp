#include "lvba/homography.hpp"

#include <cmath>

namespace lvba {

std::optional<Patch> make_patch(const Image& img, const Vec2& u, int n) {
  const double cx = std::round(u.x());
  const double cy = std::round(u.y());
  const int lo = -n / 2;
  const int hi = lo + n - 1;
  if (cx + lo < 0 || cy + lo < 0 || cx + hi > img.width() - 1 || cy + hi > img.height() - 1) {
    return std::nullopt;
  }
  Patch p;
  p.center = Vec2(cx, cy);
  p.pixels.reserve(static_cast<std::size_t>(n) * n);
  p.colors.reserve(static_cast<std::size_t>(n) * n);
  for (int dy = lo; dy <= hi; ++dy) {
    for (int dx = lo; dx <= hi; ++dx) {
      const int x = static_cast<int>(cx) + dx;
      const int y = static_cast<int>(cy) + dy;
      p.pixels.emplace_back(x, y);
      p.colors.push_back(img.at(x, y));
    }
  }
  return p;
}

Mat3 homography(const Pose& T_r, const Pose& T_t, const Vec3& p, const Vec3& n,
                const Intrinsics& K) {
  const double a = plane_offset(T_r, p, n);
  const Mat3 inner =
      a * Mat3::Identity() + (T_r.translation() - T_t.translation()) * n.transpose();
  return K.K() * T_t.rotation().transpose() * inner * T_r.rotation() * K.K_inv();
}

std::optional<Mat3> oriented_homography(const Pose& T_r, const Pose& T_t, const Vec3& p,
                                        const Vec3& n, const Intrinsics& K) {
  const double a = plane_offset(T_r, p, n);
  if (std::abs(a) < kDepthEps) return std::nullopt;
  const Mat3 H = homography(T_r, T_t, p, n, K);
  return a > 0.0 ? H : Mat3(-H);
}

std::optional<std::vector<Vec2>> warp_patch(const Mat3& H, const std::vector<Vec2>& pixels,
                                            const Intrinsics* bounds, double z_eps) {
  std::vector<Vec2> out;
  out.reserve(pixels.size());
  for (const auto& u : pixels) {
    const Vec3 h = H * Vec3(u.x(), u.y(), 1.0);
    if (!(h.z() > z_eps)) return std::nullopt;
    const Vec2 w(h.x() / h.z(), h.y() / h.z());
    if (bounds && !bounds->contains(w)) return std::nullopt;
    out.push_back(w);
  }
  return out;
}

}  // namespace lvba
