#pragma once

#include "lvba/geometry.hpp"

#include <optional>
#include <vector>

namespace lvba {

/// Square pixel patch on a reference image. Coordinates are integer pixel
/// centers around the rounded projection of a scene point.
struct Patch {
  Vec2 center = Vec2::Zero();  // rounded projection
  std::vector<Vec2> pixels;    // N*N coordinates, row-major
  std::vector<Vec3> colors;    // reference colors at `pixels`
};

/// Builds an N x N patch with offsets [-N/2, N/2 - 1] around round(u).
/// Returns std::nullopt if any pixel falls outside the image.
std::optional<Patch> make_patch(const Image& img, const Vec2& u, int n);

/// Plane-induced homography from the reference to the target image:
///   H = K R_t^T [ n^T (p - t_r) I + (t_r - t_t) n^T ] R_r K^-1
Mat3 homography(const Pose& T_r, const Pose& T_t, const Vec3& p, const Vec3& n,
                const Intrinsics& K);

/// Signed plane offset n^T (p - t_r) seen from the reference camera; the
/// homography degenerates as it approaches zero.
inline double plane_offset(const Pose& T_r, const Vec3& p, const Vec3& n) {
  return n.dot(p - T_r.translation());
}

inline constexpr double kDepthEps = 1e-6;

/// sign(a) * H with a = n^T (p - t_r): the same map, scaled so that points in
/// front of the target camera warp to a positive third coordinate. Returns
/// std::nullopt when |a| < kDepthEps.
std::optional<Mat3> oriented_homography(const Pose& T_r, const Pose& T_t, const Vec3& p,
                                        const Vec3& n, const Intrinsics& K);

/// Applies H to every patch pixel and dehomogenizes. Returns std::nullopt if
/// any warped third coordinate is <= z_eps or any result leaves the target
/// rectangle given by `bounds` (when provided).
std::optional<std::vector<Vec2>> warp_patch(const Mat3& H, const std::vector<Vec2>& pixels,
                                            const Intrinsics* bounds = nullptr,
                                            double z_eps = 1e-9);

}  // namespace lvba
