#pragma once

#include <Eigen/Core>
#include <functional>
#include <random>

#include "fc3/kinematics.hpp"

namespace fc3::test {

/// Central differences of a vector function, step h.
inline Eigen::MatrixXd finite_difference(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    J.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

/// Relative error with an absolute floor so all-zero columns compare cleanly.
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

inline Eigen::VectorXd random_vector(std::mt19937& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

/// Two 3-link arms and three objects; 6 robot DOFs + 9 object DOFs.
struct TwoArmScene {
  Scene scene;
  ArmFrames right;
  ArmFrames left;
  int block_a;
  int block_b;
  int stick;
  int stick_tip;

  TwoArmScene() {
    const double links[] = {0.25, 0.2, 0.1};
    right = add_planar_arm(scene, "r", Pose2d(0.35, 0.0, 1.5), links, JointLimits{-2.6, 2.6});
    left = add_planar_arm(scene, "l", Pose2d(-0.35, 0.0, 1.6), links, JointLimits{-2.6, 2.6});
    block_a = add_object(scene, "a", Shape::disk(0.03));
    block_b = add_object(scene, "b", Shape::disk(0.05));
    stick = add_object(scene, "stick", Shape::hook(0.3, 0.06));
    stick_tip = scene.add_frame({"stick_tip", stick, JointType::fixed, Pose2d(0.3, 0.06, 0.0), Shape::none(), {}});
  }
};

}  // namespace fc3::test
