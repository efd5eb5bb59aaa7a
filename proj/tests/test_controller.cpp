#include <Eigen/Cholesky>
#include <chrono>

#include "doctest.h"
#include "fc3/controller.hpp"
#include "test_util.hpp"

using namespace fc3;

namespace {

struct OneArm {
  Scene scene;
  ArmFrames arm;
  int block;
  int target;

  OneArm() {
    const double links[] = {0.25, 0.2, 0.1};
    arm = add_planar_arm(scene, "r", Pose2d(0.0, 0.0, std::numbers::pi / 2), links, JointLimits{-2.6, 2.6});
    block = add_object(scene, "block", Shape::disk(0.03));
    target = scene.add_frame({"target", 0, JointType::fixed, Pose2d(0.2, 0.35, 0.0), Shape::none(), {}});
  }

  KinematicState state(const Eigen::Vector3d& q, const Pose2d& block_pose = Pose2d(0.3, 0.3, 0.0)) const {
    VectorXd x = VectorXd::Zero(scene.dim());
    x.head(3) = q;
    set_object_pose(scene, x, block, block_pose);
    return make_state(scene, x);
  }

  Controller reach(int frame, std::optional<double> eps = 0.2) const {
    Controller c;
    c.name = "reach";
    c.constraints.push_back({feature::PositionDiff{arm.gripper, frame}, Comparator::eq, eps, 1.0, "reach"});
    return c;
  }
};

}  // namespace

TEST_CASE("only control cost at rest keeps the configuration") {
  OneArm t;
  Controller c;
  const auto st = t.state({0.3, 0.5, -0.2});
  const VectorXd next = step(t.scene, c, {}, st);
  CHECK((next - st.config).norm() < 1e-9);
}

TEST_CASE("transient reach moves at most one budget step per tick") {
  OneArm t;
  Scene& s = t.scene;
  // Bent arm; target 1 m away through the base, on the far side of the workspace.
  auto st = t.state({2.0, 0.4, 0.3});
  const Eigen::Vector2d p = forward_kinematics(s, st.config)[t.arm.gripper].t;
  REQUIRE(p.norm() > 0.45);
  const Eigen::Vector2d goal = p - p.normalized();
  const int far = s.add_frame({"far", 0, JointType::fixed, Pose2d(goal.x(), goal.y(), 0.0), Shape::none(), {}});
  const Controller c = t.reach(far);
  ControlSettings cfg;
  const auto trackers = enter_controller(s, c, st, cfg.tau);
  const VectorXd next = step(s, c, trackers, st, cfg);
  const auto after = forward_kinematics(s, next)[t.arm.gripper];
  CHECK((after.t - p).norm() <= 0.2 * 0.02 + cfg.solver.tol_feas);
  CHECK((after.t - p).norm() > 0.0);
}

TEST_CASE("step surfaces an already violated immediate constraint") {
  OneArm t;
  const Controller c = t.reach(t.target, std::nullopt);
  CHECK_THROWS_AS(step(t.scene, c, {}, t.state({0.0, 0.0, 0.0})), ControlError);
}

TEST_CASE("first Gauss-Newton step of the control problem is the damped pseudo-inverse direction") {
  OneArm t;
  std::mt19937 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Vector3d q = test::random_vector(rng, 3, -1.2, 1.2);
    auto st = t.state(q);
    Controller c;
    const double w = 40.0;
    c.costs.push_back({feature::PositionDiff{t.arm.gripper, t.target}, w * w, "ee"});
    ControlSettings cfg;
    cfg.damping = 0.0;
    const auto p = step_problem(t.scene, c, {}, st, cfg);
    const VectorXd x0 = q;
    const VectorXd dx = nlp::newton_step(p, x0, nlp::zero_multipliers(p));

    const auto world = forward_kinematics(t.scene, st.config);
    const MatrixXd J = jacobian(t.scene, st.config, t.arm.gripper, Query::position).leftCols(3);
    const Eigen::Vector2d e = world[t.arm.gripper].t - world[t.target].t;
    const double lam = cfg.alpha / (cfg.tau * w);
    const MatrixXd JJt = J * J.transpose() + lam * lam * MatrixXd::Identity(2, 2);
    const VectorXd oracle = -J.transpose() * JJt.ldlt().solve(e);
    CHECK((dx - oracle).norm() < 1e-8);
  }
}

TEST_CASE("immediate feasibility") {
  OneArm t;
  SUBCASE("mid-range joint limits hold") {
    Controller c;
    c.constraints.push_back({feature::JointLimitsFeature{}, Comparator::ineq});
    CHECK(immediate_feasible(t.scene, c, t.state({0.1, 0.2, 0.3}).config, {}).holds);
  }
  SUBCASE("logic gate") {
    Controller c;
    c.logic.push_back({t.arm.gripper, t.block});
    const auto r = immediate_feasible(t.scene, c, t.state({0.1, 0.2, 0.3}).config, {});
    CHECK_FALSE(r.holds);
    CHECK_FALSE(r.logic_ok);
  }
  SUBCASE("violation magnitude") {
    // Gripper at (0, 0.55); target frame 0.3 m away along x.
    Scene& s = t.scene;
    const int off = s.add_frame({"off", 0, JointType::fixed, Pose2d(0.3, 0.55, 0.0), Shape::none(), {}});
    const Controller c = t.reach(off, std::nullopt);
    const auto r = immediate_feasible(s, c, t.state({0.0, 0.0, 0.0}).config, {});
    CHECK_FALSE(r.holds);
    CHECK(r.max_violation == doctest::Approx(0.3));
  }
  SUBCASE("holds is exactly the threshold test") {
    Scene& s = t.scene;
    for (double d : {0.0, 5e-4, 1e-3, 1.5e-3}) {
      const int f = s.add_frame({"p" + std::to_string(d), 0, JointType::fixed, Pose2d(d, 0.55, 0.0), Shape::none(), {}});
      const auto r = immediate_feasible(s, t.reach(f, std::nullopt), t.state({0.0, 0.0, 0.0}).config, {});
      CHECK(r.holds == (r.max_violation <= 1e-3));
    }
  }
}

TEST_CASE("final feasibility") {
  OneArm t;
  Scene& s = t.scene;
  const int on = s.add_frame({"on", 0, JointType::fixed, Pose2d(0.0, 0.55, 0.0), Shape::none(), {}});
  const int away = s.add_frame({"away", 0, JointType::fixed, Pose2d(0.1, 0.55, 0.0), Shape::none(), {}});
  const auto x = t.state({0.0, 0.0, 0.0}).config;
  CHECK(final_feasible(s, t.reach(on), x, {}).holds);
  CHECK_FALSE(final_feasible(s, t.reach(away), x, {}).holds);

  Controller mixed = t.reach(away);
  mixed.constraints.front().label = "transient_reach";
  mixed.constraints.push_back({feature::JointLimitsFeature{}, Comparator::ineq, {}, 1.0, "limits"});
  CHECK(immediate_feasible(s, mixed, x, {}).holds);
  const auto r = final_feasible(s, mixed, x, {});
  CHECK_FALSE(r.holds);
  REQUIRE(r.violated.size() == 1);
  CHECK(r.violated.front() == "transient_reach");
}

TEST_CASE("terminal solve") {
  OneArm t;
  Scene& s = t.scene;
  SUBCASE("reachable target") {
    const Controller c = t.reach(t.target);
    const auto r = solve_terminal(s, c, t.state({0.0, 0.0, 0.0}));
    CHECK(r.feasible);
    CHECK(final_feasible(s, c, r.config, {}).holds);
  }
  SUBCASE("target at twice the arm length") {
    const int far = s.add_frame({"far", 0, JointType::fixed, Pose2d(0.0, 1.1, 0.0), Shape::none(), {}});
    CHECK_FALSE(solve_terminal(s, t.reach(far), t.state({0.0, 0.0, 0.0})).feasible);
  }
  SUBCASE("already converged seed is a fixed point") {
    const int on = s.add_frame({"on", 0, JointType::fixed, Pose2d(0.0, 0.55, 0.0), Shape::none(), {}});
    const auto st = t.state({0.0, 0.0, 0.0});
    const auto r = solve_terminal(s, t.reach(on), st);
    CHECK(r.feasible);
    CHECK((r.config - st.config).norm() < 1e-4);
  }
  SUBCASE("held object is virtually attached") {
    Controller place;
    place.logic.push_back({t.arm.gripper, t.block});
    place.constraints.push_back({feature::PositionDiff{t.block, t.target}, Comparator::eq, 0.2});
    const auto r = solve_terminal(s, place, t.state({0.0, 0.0, 0.0}));
    CHECK(r.feasible);
    const auto w = forward_kinematics(s, r.config);
    CHECK((w[t.arm.gripper].t - w[t.target].t).norm() < 1e-3);
  }
}

TEST_CASE("signals") {
  OneArm t;
  auto st = t.state({0.0, 0.0, 0.0}, Pose2d(0.0, 0.55, 0.0));
  Controller grasp;
  grasp.signal = {Signal::Kind::grasp, t.arm.gripper, t.block};
  Controller place;
  place.signal = {Signal::Kind::place, t.arm.gripper, -1};

  const auto held = fire_signal(t.scene, grasp, st);
  REQUIRE(held.attachments.size() == 1);
  CHECK(held.held_by(t.arm.gripper) == t.block);
  CHECK(fire_signal(t.scene, grasp, held).attachments.size() == 1);  // idempotent
  CHECK(fire_signal(t.scene, Controller{}, held).attachments.size() == 1);

  auto moved = held;
  moved.config.head(3) << 0.2, -0.3, 0.1;
  sync_attached(t.scene, moved);
  const auto released = fire_signal(t.scene, place, moved);
  CHECK(released.attachments.empty());
  const auto w0 = forward_kinematics(t.scene, moved.config, moved.attachments);
  const auto w1 = forward_kinematics(t.scene, released.config);
  CHECK(pose_difference(w0[t.block], w1[t.block]).norm() < 1e-12);

  auto away = t.state({0.0, 0.0, 0.0}, Pose2d(0.3, 0.3, 0.0));
  CHECK_THROWS_AS(fire_signal(t.scene, grasp, away), KinematicsError);
}

TEST_CASE("repeated steps converge on a reachable target") {
  OneArm t;
  const Controller c = t.reach(t.target);
  ControlSettings cfg;
  std::mt19937 rng(23);
  const auto t0 = std::chrono::steady_clock::now();
  int total_steps = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto st = t.state(test::random_vector(rng, 3, -1.5, 1.5));
    const auto trackers = enter_controller(t.scene, c, st, cfg.tau);
    int k = 0;
    for (; k < 6000 && !final_feasible(t.scene, c, st.config, {}).holds; ++k) {
      const VectorXd next = step(t.scene, c, trackers, st, cfg);
      const VectorXd dq = (next - st.config).cwiseMax(-cfg.tau).cwiseMin(cfg.tau);
      st.velocity = dq / cfg.tau;
      st.config += dq;
    }
    total_steps += k;
    CHECK(final_feasible(t.scene, c, st.config, {}).holds);
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("steps: ", total_steps, " mean ms/step: ", ms / std::max(1, total_steps));
}
