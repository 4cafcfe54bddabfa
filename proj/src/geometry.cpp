#include "lvba/geometry.hpp"

#include "lvba/errors.hpp"

#include <cmath>
#include <string>

namespace lvba {

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < 1e-12) {
    return Mat3::Identity() + hat(phi);
  }
  return Eigen::AngleAxisd(theta, phi / theta).toRotationMatrix();
}

Pose::Pose(const Eigen::Quaterniond& q, const Vec3& t) : q_(q.normalized()), t_(t) {
  if (q_.w() < 0.0) q_.coeffs() *= -1.0;
}

Pose::Pose(const Mat3& R, const Vec3& t) : Pose(Eigen::Quaterniond(R), t) {}

Pose Pose::from_matrix(const Mat4& T) {
  return {Mat3(T.topLeftCorner<3, 3>()), Vec3(T.topRightCorner<3, 1>())};
}

Pose Pose::exp(const Vec6& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  const double theta = phi.norm();
  const Mat3 Phi = hat(phi);
  Mat3 V;
  if (theta < 1e-8) {
    V = Mat3::Identity() + 0.5 * Phi + Phi * Phi / 6.0;
  } else {
    const double t2 = theta * theta;
    V = Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * Phi +
        (theta - std::sin(theta)) / (t2 * theta) * Phi * Phi;
  }
  return {so3_exp(phi), V * rho};
}

Mat4 Pose::matrix() const {
  Mat4 T = Mat4::Identity();
  T.topLeftCorner<3, 3>() = rotation();
  T.topRightCorner<3, 1>() = t_;
  return T;
}

Pose Pose::inverse() const {
  const Eigen::Quaterniond qi = q_.conjugate();
  return {qi, -(qi * t_)};
}

Pose Pose::operator*(const Pose& other) const {
  return {q_ * other.q_, q_ * other.t_ + t_};
}

double translation_distance(const Pose& a, const Pose& b) {
  return (a.translation() - b.translation()).norm();
}

double rotation_angle(const Pose& a, const Pose& b) {
  return a.quaternion().angularDistance(b.quaternion());
}

Mat3 Intrinsics::K() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 Intrinsics::K_inv() const {
  Mat3 k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

bool Intrinsics::valid() const {
  return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx > 0.0 && cx < width &&
         cy > 0.0 && cy < height;
}

bool Intrinsics::contains(const Vec2& u, double margin) const {
  return u.x() >= margin && u.y() >= margin && u.x() <= width - 1 - margin &&
         u.y() <= height - 1 - margin;
}

// With pixel centers at integer coordinates, pixel i of the half-resolution
// image covers old pixels 2i and 2i+1, so x_new = (x_old - 0.5) / 2.
Intrinsics Intrinsics::half() const {
  Intrinsics h;
  h.fx = fx * 0.5;
  h.fy = fy * 0.5;
  h.cx = (cx + 0.5) * 0.5 - 0.5;
  h.cy = (cy + 0.5) * 0.5 - 0.5;
  h.width = width / 2;
  h.height = height / 2;
  return h;
}

std::optional<Vec2> project_unbounded(const Intrinsics& K, const Pose& T, const Vec3& p) {
  const Vec3 pc = T.quaternion().conjugate() * (p - T.translation());
  if (!(pc.z() > kMinDepth)) return std::nullopt;
  return Vec2(K.fx * pc.x() / pc.z() + K.cx, K.fy * pc.y() / pc.z() + K.cy);
}

std::optional<Vec2> project(const Intrinsics& K, const Pose& T, const Vec3& p) {
  auto u = project_unbounded(K, T, p);
  if (!u || !K.contains(*u)) return std::nullopt;
  return u;
}

Image::Image(int width, int height, double fill)
    : width_(width), height_(height),
      data_(3 * static_cast<std::size_t>(width) * height, fill) {}

namespace {

struct BilinearCell {
  int x0, y0;
  double fx, fy;
};

BilinearCell locate(const Image& img, const Vec2& u) {
  BilinearCell c;
  c.x0 = static_cast<int>(std::floor(u.x()));
  c.y0 = static_cast<int>(std::floor(u.y()));
  // The last row/column is reachable with a unit fraction in the previous cell.
  if (c.x0 >= img.width() - 1) c.x0 = img.width() - 2;
  if (c.y0 >= img.height() - 1) c.y0 = img.height() - 2;
  if (c.x0 < 0) c.x0 = 0;
  if (c.y0 < 0) c.y0 = 0;
  c.fx = u.x() - c.x0;
  c.fy = u.y() - c.y0;
  return c;
}

}  // namespace

Vec3 sample_bilinear(const Image& img, const Vec2& u) {
  if (img.width() == 1 || img.height() == 1) {
    return img.at(static_cast<int>(std::lround(u.x())), static_cast<int>(std::lround(u.y())));
  }
  const auto c = locate(img, u);
  const Vec3 p00 = img.at(c.x0, c.y0);
  const Vec3 p10 = img.at(c.x0 + 1, c.y0);
  const Vec3 p01 = img.at(c.x0, c.y0 + 1);
  const Vec3 p11 = img.at(c.x0 + 1, c.y0 + 1);
  return (1.0 - c.fy) * ((1.0 - c.fx) * p00 + c.fx * p10) + c.fy * ((1.0 - c.fx) * p01 + c.fx * p11);
}

Vec3 sample_bilinear(const Image& img, const Vec2& u, Eigen::Matrix<double, 3, 2>& grad) {
  const auto c = locate(img, u);
  const Vec3 p00 = img.at(c.x0, c.y0);
  const Vec3 p10 = img.at(c.x0 + 1, c.y0);
  const Vec3 p01 = img.at(c.x0, c.y0 + 1);
  const Vec3 p11 = img.at(c.x0 + 1, c.y0 + 1);
  grad.col(0) = (1.0 - c.fy) * (p10 - p00) + c.fy * (p11 - p01);
  grad.col(1) = (1.0 - c.fx) * (p01 - p00) + c.fx * (p11 - p10);
  return (1.0 - c.fy) * ((1.0 - c.fx) * p00 + c.fx * p10) + c.fy * ((1.0 - c.fx) * p01 + c.fx * p11);
}

namespace {

void keys_weights(double t, double w[4], double dw[4]) {
  const double t2 = t * t, t3 = t2 * t;
  w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
  w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
  w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
  w[3] = 0.5 * (t3 - t2);
  dw[0] = 0.5 * (-3.0 * t2 + 4.0 * t - 1.0);
  dw[1] = 0.5 * (9.0 * t2 - 10.0 * t);
  dw[2] = 0.5 * (-9.0 * t2 + 8.0 * t + 1.0);
  dw[3] = 0.5 * (3.0 * t2 - 2.0 * t);
}

Vec3 cubic_impl(const Image& img, const Vec2& u, Eigen::Matrix<double, 3, 2>* grad) {
  const auto c = locate(img, u);
  double wx[4], dwx[4], wy[4], dwy[4];
  keys_weights(c.fx, wx, dwx);
  keys_weights(c.fy, wy, dwy);
  int xs[4], ys[4];
  for (int k = 0; k < 4; ++k) {
    xs[k] = std::clamp(c.x0 - 1 + k, 0, img.width() - 1);
    ys[k] = std::clamp(c.y0 - 1 + k, 0, img.height() - 1);
  }
  Vec3 v = Vec3::Zero(), gx = Vec3::Zero(), gy = Vec3::Zero();
  for (int j = 0; j < 4; ++j) {
    Vec3 row = Vec3::Zero(), drow = Vec3::Zero();
    for (int i = 0; i < 4; ++i) {
      const Vec3 p = img.at(xs[i], ys[j]);
      row += wx[i] * p;
      drow += dwx[i] * p;
    }
    v += wy[j] * row;
    gx += wy[j] * drow;
    gy += dwy[j] * row;
  }
  if (grad) {
    grad->col(0) = gx;
    grad->col(1) = gy;
  }
  return v;
}

}  // namespace

Vec3 sample_cubic(const Image& img, const Vec2& u) { return cubic_impl(img, u, nullptr); }

Vec3 sample_cubic(const Image& img, const Vec2& u, Eigen::Matrix<double, 3, 2>& grad) {
  return cubic_impl(img, u, &grad);
}

GrayImage to_gray(const Image& img) {
  GrayImage g;
  g.width = img.width();
  g.height = img.height();
  g.data.resize(static_cast<std::size_t>(g.width) * g.height);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) g.at(x, y) = img.gray(x, y);
  return g;
}

Image downsample(const Image& img) {
  Image out(img.width() / 2, img.height() / 2);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const Vec3 sum = img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) + img.at(2 * x, 2 * y + 1) +
                       img.at(2 * x + 1, 2 * y + 1);
      out.set(x, y, 0.25 * sum);
    }
  }
  return out;
}

Pyramid build_pyramid(const Image& img, const Intrinsics& K, int n_levels) {
  if (n_levels < 1) throw InvalidArgument("build_pyramid: n_levels must be >= 1");
  const int need = 1 << (n_levels - 1);
  if (img.width() < need || img.height() < need) {
    throw InvalidArgument("build_pyramid: image " + std::to_string(img.width()) + "x" +
                          std::to_string(img.height()) + " too small for " +
                          std::to_string(n_levels) + " levels");
  }
  Pyramid pyr;
  pyr.levels.push_back({img, K});
  for (int k = 1; k < n_levels; ++k) {
    const auto& prev = pyr.levels.back();
    pyr.levels.push_back({downsample(prev.image), prev.intrinsics.half()});
  }
  return pyr;
}

}  // namespace lvba
