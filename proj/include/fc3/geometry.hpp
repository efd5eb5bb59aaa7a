#pragma once

#include <Eigen/Core>
#include <cmath>
#include <numbers>

namespace fc3 {

template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  using std::atan2, std::sin, std::cos;
  return atan2(sin(a), cos(a));
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 2> rotation(Scalar theta) {
  using std::cos, std::sin;
  Eigen::Matrix<Scalar, 2, 2> r;
  const Scalar c = cos(theta), s = sin(theta);
  r << c, -s, s, c;
  return r;
}

// 90 degree counter-clockwise rotation; the planar cross product with the z axis.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 2, 1> perp(const Eigen::MatrixBase<Derived>& v) {
  return {-v(1), v(0)};
}

/// Rigid transform in the plane: rotate by `theta`, then translate by `t`.
template <typename Scalar>
struct Pose2 {
  using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

  Vec2 t = Vec2::Zero();
  Scalar theta = Scalar(0);

  Pose2() = default;
  Pose2(Scalar x, Scalar y, Scalar th) : t(x, y), theta(th) {}
  Pose2(const Vec2& translation, Scalar th) : t(translation), theta(th) {}

  static Pose2 identity() { return {}; }

  Scalar x() const { return t(0); }
  Scalar y() const { return t(1); }

  Eigen::Matrix<Scalar, 2, 2> R() const { return rotation(theta); }

  Vec2 apply(const Vec2& p) const { return R() * p + t; }

  Pose2 operator*(const Pose2& other) const { return {apply(other.t), theta + other.theta}; }

  Pose2 inverse() const { return {-(R().transpose() * t), -theta}; }

  Eigen::Matrix<Scalar, 3, 1> vector() const { return {t(0), t(1), theta}; }

  static Pose2 from_vector(const Eigen::Matrix<Scalar, 3, 1>& v) { return {v(0), v(1), v(2)}; }
};

using Pose2d = Pose2<double>;

/// Difference of two poses as (dx, dy, wrapped dtheta).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> pose_difference(const Pose2<Scalar>& a, const Pose2<Scalar>& b) {
  return {a.t(0) - b.t(0), a.t(1) - b.t(1), wrap_angle(a.theta - b.theta)};
}

}  // namespace fc3
