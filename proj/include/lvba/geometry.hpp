#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <span>
#include <vector>

namespace lvba {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Skew-symmetric matrix such that hat(a) * b == a.cross(b).
Mat3 hat(const Vec3& v);

/// SO(3) exponential map (Rodrigues).
Mat3 so3_exp(const Vec3& phi);

/// Rigid transform in SE(3), world-from-sensor. The rotation is stored as a
/// unit quaternion and re-normalized on every construction.
class Pose {
public:
  Pose() : q_(Eigen::Quaterniond::Identity()), t_(Vec3::Zero()) {}
  Pose(const Eigen::Quaterniond& q, const Vec3& t);
  Pose(const Mat3& R, const Vec3& t);

  static Pose identity() { return {}; }
  static Pose from_matrix(const Mat4& T);

  /// SE(3) exponential of xi = (rho, phi): translation part first.
  static Pose exp(const Vec6& xi);

  Mat3 rotation() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }
  const Vec3& translation() const { return t_; }
  Mat4 matrix() const;

  Pose inverse() const;
  Vec3 operator*(const Vec3& p) const { return q_ * p + t_; }
  Pose operator*(const Pose& other) const;

  /// Right-multiplied increment: returns this * exp(xi).
  Pose retract(const Vec6& xi) const { return *this * exp(xi); }

  /// Camera optical axis (third rotation column) in the world frame.
  Vec3 z_axis() const { return rotation().col(2); }

private:
  Eigen::Quaterniond q_;
  Vec3 t_;
};

/// compose(a, b) applies b first, then a.
inline Pose compose(const Pose& a, const Pose& b) { return a * b; }

/// Translation distance and rotation angle (radians) between two poses.
double translation_distance(const Pose& a, const Pose& b);
double rotation_angle(const Pose& a, const Pose& b);

/// Pinhole intrinsics. Integer pixel coordinate (i, j) is the center of
/// pixel (i, j); the valid image rectangle is [0, width-1] x [0, height-1].
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Mat3 K() const;
  Mat3 K_inv() const;
  bool valid() const;
  bool contains(const Vec2& u, double margin = 0.0) const;
  /// Intrinsics of a 2x2 box-downsampled image.
  Intrinsics half() const;
};

inline constexpr double kMinDepth = 1e-3;

/// Projects a world point into the camera at pose T (world-from-camera).
/// Returns std::nullopt for points behind the camera (z <= kMinDepth) or
/// outside the image rectangle.
std::optional<Vec2> project(const Intrinsics& K, const Pose& T, const Vec3& p);

/// Projection without the bounds check; only the depth test is applied.
std::optional<Vec2> project_unbounded(const Intrinsics& K, const Pose& T, const Vec3& p);

/// Row-major RGB image with channels in [0, 1].
class Image {
public:
  Image() = default;
  Image(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  Vec3 at(int x, int y) const {
    const double* p = &data_[3 * (static_cast<std::size_t>(y) * width_ + x)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, const Vec3& c) {
    double* p = &data_[3 * (static_cast<std::size_t>(y) * width_ + x)];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
  double gray(int x, int y) const {
    const double* p = &data_[3 * (static_cast<std::size_t>(y) * width_ + x)];
    return (p[0] + p[1] + p[2]) / 3.0;
  }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool operator==(const Image& other) const = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Bilinear RGB sample. u must lie inside [0, w-1] x [0, h-1].
Vec3 sample_bilinear(const Image& img, const Vec2& u);

/// Bilinear sample plus its 3x2 gradient with respect to u.
Vec3 sample_bilinear(const Image& img, const Vec2& u, Eigen::Matrix<double, 3, 2>& grad);

/// Keys cubic convolution (a = -0.5) with edge replication. Reproduces
/// quadratics exactly and is C1 in u. Needs an image of at least 2 x 2.
Vec3 sample_cubic(const Image& img, const Vec2& u);
Vec3 sample_cubic(const Image& img, const Vec2& u, Eigen::Matrix<double, 3, 2>& grad);

/// Single-channel image used for DoG responses and luma.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
};

GrayImage to_gray(const Image& img);

struct PyramidLevel {
  Image image;
  Intrinsics intrinsics;
};

/// Level 0 is full resolution; each level is a 2x2 box downsample.
struct Pyramid {
  std::vector<PyramidLevel> levels;
};

Pyramid build_pyramid(const Image& img, const Intrinsics& K, int n_levels);

Image downsample(const Image& img);

}  // namespace lvba
