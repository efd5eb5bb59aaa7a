#include <set>

#include "doctest.h"
#include "fc3/chain.hpp"
#include "test_util.hpp"

using namespace fc3;

namespace {

struct Cell {
  Scene scene;
  ArmFrames arm;
  int block;
  int goal;

  Cell() {
    const double links[] = {0.25, 0.2, 0.1};
    arm = add_planar_arm(scene, "r", Pose2d(0.0, 0.0, std::numbers::pi / 2), links, JointLimits{-2.6, 2.6});
    block = add_object(scene, "block", Shape::disk(0.03));
    goal = scene.add_frame({"goal", 0, JointType::fixed, Pose2d(-0.2, 0.3, 0.0), Shape::none(), {}});
  }

  KinematicState state(const Pose2d& block_pose = Pose2d(0.25, 0.3, 0.0)) const {
    VectorXd x = VectorXd::Zero(scene.dim());
    x.head(3) << 0.3, 0.6, 0.4;
    set_object_pose(scene, x, block, block_pose);
    return make_state(scene, x);
  }

  Controller pick() const {
    Controller c;
    c.name = "pick";
    c.constraints.push_back({feature::PositionDiff{arm.gripper, block}, Comparator::eq, 0.2, 1.0, "reach_block"});
    c.signal = {Signal::Kind::grasp, arm.gripper, block};
    c.logic = {{arm.gripper, -1}};
    return c;
  }

  Controller place() const {
    Controller c;
    c.name = "place";
    c.constraints.push_back({feature::PositionDiff{block, goal}, Comparator::eq, 0.2, 1.0, "block_at_goal"});
    c.signal = {Signal::Kind::place, arm.gripper, -1};
    c.logic = {{arm.gripper, block}};
    return c;
  }

  std::vector<ConstraintSpec> goal_constraints() const {
    return {{feature::PositionDiff{block, goal}, Comparator::eq, {}, 1.0, "goal"}};
  }
};

}  // namespace

TEST_CASE("goal-only remainder") {
  Cell t;
  ControllerChain chain{{t.pick(), t.place()}, t.goal_constraints(), {}, {}};
  auto st = t.state(Pose2d(-0.2, 0.3, 0.0));
  const auto r = sequence_feasible(t.scene, chain, 2, st);
  CHECK(r.feasible);
  REQUIRE(r.waypoints.size() == 1);
  CHECK(r.waypoints.front() == st.config);
}

TEST_CASE("pick and place sequence") {
  Cell t;
  ControllerChain chain{{t.pick(), t.place()}, t.goal_constraints(), {}, {}};
  SUBCASE("reachable") {
    const auto r = sequence_feasible(t.scene, chain, 0, t.state());
    CHECK(r.feasible);
    REQUIRE(r.waypoints.size() == 3);
    // The block rides with the gripper into the second waypoint.
    const auto w1 = forward_kinematics(t.scene, r.waypoints[1]);
    CHECK((w1[t.arm.gripper].t - Eigen::Vector2d(0.25, 0.3)).norm() < 1e-3);
    Attachments held{{t.arm.gripper, t.block, Pose2d::identity()}};
    const auto w2 = forward_kinematics(t.scene, r.waypoints[2], held);
    CHECK((w2[t.block].t - w2[t.goal].t).norm() < 1e-3);
  }
  SUBCASE("block out of reach") {
    CHECK_FALSE(sequence_feasible(t.scene, chain, 0, t.state(Pose2d(0.9, 0.3, 0.0))).feasible);
  }
  SUBCASE("logic mismatch at entry") {
    const auto r = sequence_feasible(t.scene, chain, 1, t.state());
    CHECK_FALSE(r.feasible);
    CHECK(r.reason.find("logic") != std::string::npos);
  }
  SUBCASE("entry mid-chain while holding") {
    auto st = t.state(Pose2d(0.0, 0.55, 0.0));
    st.config.head(3).setZero();
    st = attach(t.scene, st, t.arm.gripper, t.block);
    CHECK(sequence_feasible(t.scene, chain, 1, st).feasible);
  }
}

TEST_CASE("switching configurations") {
  Cell t;
  SUBCASE("no successor constraints: terminal of the first controller") {
    Controller reach = t.pick();
    reach.signal = {};
    reach.logic.clear();
    const auto st = t.state();
    const auto sw = switching_configuration(t.scene, reach, Controller{}, st);
    const auto term = solve_terminal(t.scene, reach, st);
    CHECK(sw.feasible);
    CHECK(term.feasible);
    CHECK((sw.config.head(3) - term.config.head(3)).norm() < 1e-3);
  }
  SUBCASE("contradictory halfplanes") {
    // First: gripper x >= 0.2 (transient). Second: gripper x <= 0 (immediate). The y rows are loose.
    const int origin = 0;
    Controller a, b;
    a.constraints.push_back({feature::PositionDiff{t.arm.gripper, origin, Eigen::Vector2d(0.2, -10.0)},
                             Comparator::ineq, 0.2, -1.0});
    b.constraints.push_back(
        {feature::PositionDiff{t.arm.gripper, origin, Eigen::Vector2d(0.0, 10.0)}, Comparator::ineq, {}, 1.0});
    CHECK_FALSE(switching_configuration(t.scene, a, b, t.state()).feasible);
  }
}

TEST_CASE("implicit constraint propagation") {
  Cell t;
  SUBCASE("single controller picks up the violated goal entries") {
    Controller reach = t.pick();
    reach.signal = {};
    reach.logic.clear();
    ControllerChain chain{{reach}, t.goal_constraints(), {}, {}};
    const auto rep = propagate_implicit(t.scene, chain, t.state());
    REQUIRE(rep.added[0].size() == 1);
    CHECK(rep.added[0][0] == "goal");
    CHECK(chain.controllers[0].implicit_constraints[0].provenance == "goal");
    CHECK(chain.controllers[0].implicit_constraints[0].immediate());
  }
  SUBCASE("satisfied successor adds nothing") {
    ControllerChain chain{{t.pick(), t.place()}, t.goal_constraints(), {}, {}};
    const auto rep = propagate_implicit(t.scene, chain, t.state());
    CHECK(rep.added[0].empty());
    CHECK(rep.added[1].empty());
  }
  SUBCASE("grasp then place: place's alignment precondition moves into the grasp") {
    Controller place = t.place();
    place.constraints.push_back(
        {feature::Alignment{t.arm.gripper, t.block, 0.0}, Comparator::eq, {}, 1.0, "aligned_with_block"});
    ControllerChain chain{{t.pick(), place}, t.goal_constraints(), {}, {}};
    // Rotate the block so the grasp's terminal orientation disagrees.
    const auto st = t.state(Pose2d(0.25, 0.3, 2.0));
    const auto rep = propagate_implicit(t.scene, chain, st);

    // Oracle: evaluate every immediate successor constraint at the anchor.
    const auto& anchor = rep.anchors[0];
    const Attachments h = attachments_for_logic(chain.controllers[0].logic, st.attachments);
    std::set<std::string> expected;
    for (const auto& g : place.constraints) {
      if (!g.immediate()) continue;
      const double v = violation(g.comparator, evaluate(g, EvalContext{t.scene, anchor, h}).value);
      if (v > 1e-3) expected.insert(g.label);
    }
    CHECK(expected == std::set<std::string>{"aligned_with_block"});
    CHECK(std::set<std::string>(rep.added[0].begin(), rep.added[0].end()) == expected);

    const auto before = chain.controllers[0].implicit_constraints.size();
    const auto again = propagate_implicit(t.scene, chain, st);
    CHECK(again.added[0].empty());
    CHECK(again.added[1].empty());
    CHECK(chain.controllers[0].implicit_constraints.size() == before);
  }
}

TEST_CASE("goal predicate boundary is inclusive") {
  Cell t;
  auto st = t.state(Pose2d(-0.2 + 1e-3, 0.3, 0.0));
  const auto g = t.goal_constraints();
  const double v = violation(Comparator::eq, evaluate(g[0], EvalContext{t.scene, st.config}).value);
  CHECK(goal_satisfied(t.scene, g, st.config, {}, v));
  CHECK_FALSE(goal_satisfied(t.scene, g, st.config, {}, v * 0.999));
  CHECK_FALSE(goal_satisfied(t.scene, g, t.state(Pose2d(-0.1, 0.3, 0.0)).config, {}));
}

TEST_CASE("sequence and switching agree with a grid oracle on two-joint chains") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(-0.5, 0.5), rad(0.04, 0.15), coin(0.0, 1.0);
  int compared = 0, feasible_count = 0, attempts = 0;
  while (compared < 20 && attempts < 200) {
    ++attempts;
    Scene s;
    const double links[] = {0.3, 0.25};
    const auto arm = add_planar_arm(s, "a", Pose2d::identity(), links, JointLimits{-2.6, 2.6});
    const int c1 = s.add_frame({"c1", 0, JointType::fixed, Pose2d(u(rng), u(rng), 0.0), Shape::none(), {}});
    const int c2 = s.add_frame({"c2", 0, JointType::fixed, Pose2d(u(rng), u(rng), 0.0), Shape::none(), {}});
    // margin r - r_g turns the distance feature into |p_g - c| - r.
    const double r1 = rad(rng), r2 = rad(rng);
    const double rg = s.frame(arm.gripper).shape.radius();
    Controller a, b;
    a.name = "a";
    b.name = "b";
    a.constraints.push_back({feature::Distance{arm.gripper, c1, r1 - rg}, Comparator::ineq, 0.2, 1.0, "near_c1"});
    if (coin(rng) < 0.5)
      b.constraints.push_back({feature::Distance{arm.gripper, c2, r2 - rg}, Comparator::ineq, {}, 1.0, "near_c2"});
    else
      b.constraints.push_back({feature::Distance{arm.gripper, c2, r2 - rg}, Comparator::ineq, {}, -1.0, "away_c2"});

    // Oracle: min over a joint grid of the joint violation.
    const int n = 300;
    double best = std::numeric_limits<double>::infinity();
    VectorXd q(2);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        q << -2.6 + 5.2 * i / (n - 1), -2.6 + 5.2 * k / (n - 1);
        const auto w = forward_kinematics(s, q);
        double v = 0.0;
        for (const auto* g : {&a.constraints[0], &b.constraints[0]})
          v = std::max(v, violation(g->comparator, evaluate(*g, EvalContext{s, q, {}, nullptr, nullptr, &w}).value));
        best = std::min(best, v);
      }
    }
    const bool oracle_feasible = best <= 0.0;
    if (!oracle_feasible && best < 0.02) continue;  // too close to call at grid resolution

    VectorXd q0(2);
    q0 << 0.4, 0.5;
    const auto st = make_state(s, q0);
    ControllerChain chain{{a, b}, {}, {}, {}};
    const bool seq = sequence_feasible(s, chain, 0, st).feasible;
    const bool sw = switching_configuration(s, a, b, st).feasible;
    INFO("instance ", compared, " oracle min violation ", best);
    CHECK(seq == sw);
    CHECK(seq == oracle_feasible);
    feasible_count += oracle_feasible;
    ++compared;
  }
  CHECK(compared == 20);
  CHECK(feasible_count > 0);
  CHECK(feasible_count < 20);
}
