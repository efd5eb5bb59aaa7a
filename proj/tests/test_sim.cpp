#include <doctest.h>

#include <cmath>

#include "fc3/sim.hpp"

using namespace fc3;

namespace {

KinematicState holding_red(const Scenario& s) {
  const int red = s.frame("red");
  const int gripper = s.frame("arm_gripper");
  KinematicState st = s.nominal;
  const auto world = forward_kinematics(s.scene, st.config, st.attachments);
  set_object_pose(s.scene, st.config, red, world[static_cast<std::size_t>(gripper)]);
  return attach(s.scene, st, gripper, red);
}

}  // namespace

TEST_CASE("world step") {
  const Scenario s = build_scenario("tower");
  const auto dofs = s.scene.robot_dofs();

  SUBCASE("reference equal to the current configuration only advances time") {
    World w(s.scene, s.nominal, 0.02, 1.0);
    w.step(s.nominal.config);
    CHECK(w.state().config == s.nominal.config);
    CHECK(w.state().velocity.isZero());
    CHECK(w.ticks() == 1);
    CHECK(w.time() == doctest::Approx(0.02));
  }
  SUBCASE("velocity limit") {
    World w(s.scene, s.nominal, 0.02, 1.0);
    VectorXd ref = s.nominal.config;
    ref(dofs[1]) += 1.0;
    w.step(ref);
    CHECK(w.state().config(dofs[1]) - s.nominal.config(dofs[1]) == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(w.state().velocity(dofs[1]) == doctest::Approx(1.0));
    CHECK(w.state().config(dofs[0]) == s.nominal.config(dofs[0]));
  }
  SUBCASE("uniform scaling keeps the direction") {
    World w(s.scene, s.nominal, 0.02, 1.0);
    VectorXd ref = s.nominal.config;
    ref(dofs[0]) += 1.0;
    ref(dofs[2]) -= 0.5;
    w.step(ref);
    const VectorXd d = w.state().config - s.nominal.config;
    CHECK(d(dofs[0]) == doctest::Approx(0.02));
    CHECK(d(dofs[2]) == doctest::Approx(-0.01));
  }
  SUBCASE("joint limits clamp") {
    KinematicState st = s.nominal;
    st.config(dofs[0]) = 2.595;
    World w(s.scene, st, 0.02, 1.0);
    VectorXd ref = st.config;
    ref(dofs[0]) = 3.5;
    w.step(ref);
    CHECK(w.state().config(dofs[0]) == 2.6);
  }
  SUBCASE("objects ignore robot references") {
    World w(s.scene, s.nominal, 0.02, 1.0);
    VectorXd ref = s.nominal.config;
    const int off = s.scene.dof_offset(s.frame("blue"));
    ref(off) += 0.3;
    w.step(ref);
    CHECK(w.state().config(off) == s.nominal.config(off));
  }
  SUBCASE("an attached block follows the gripper exactly") {
    const int red = s.frame("red");
    const int gripper = s.frame("arm_gripper");
    const KinematicState st = holding_red(s);
    const Pose2d offset = st.attachment_of(red)->offset;
    World w(s.scene, st, 0.02, 1.0);
    VectorXd ref = st.config;
    ref(dofs[0]) += 0.7;
    ref(dofs[1]) -= 0.4;
    ref(dofs[2]) += 1.1;
    const int off = s.scene.dof_offset(red);
    for (int k = 0; k < 100; ++k) {
      w.step(ref);
      const auto world = forward_kinematics(s.scene, w.state().config, {});
      const Pose2d expected = world[static_cast<std::size_t>(gripper)] * offset;
      CHECK(w.state().config(off) == doctest::Approx(expected.x()).epsilon(1e-12));
      CHECK(w.state().config(off + 1) == doctest::Approx(expected.y()).epsilon(1e-12));
      CHECK(std::abs(wrap_angle(w.state().config(off + 2) - expected.theta)) < 1e-12);
    }
  }
}

TEST_CASE("perturbations") {
  const Scenario s = build_scenario("tower");
  const int green = s.frame("green");
  const int off = s.scene.dof_offset(green);

  SUBCASE("teleport, shift and stack") {
    KinematicState st = s.nominal;
    EffectSpec shift;
    shift.kind = EffectSpec::Kind::shift;
    shift.object = "green";
    shift.delta = {-0.15, 0.0};
    apply_effect(s.scene, st, shift);
    CHECK(st.config(off) == doctest::Approx(s.nominal.config(off) - 0.15));
    EffectSpec stack;
    stack.kind = EffectSpec::Kind::stack_on;
    stack.object = "green";
    stack.onto = "blue";
    apply_effect(s.scene, st, stack);
    const int blue_off = s.scene.dof_offset(s.frame("blue"));
    CHECK(st.config(off) == st.config(blue_off));
    CHECK(st.config(off + 1) == st.config(blue_off + 1));
  }
  SUBCASE("moving a held object releases it") {
    const int red = s.frame("red");
    World w(s.scene, holding_red(s), 0.02, 1.0);
    REQUIRE(w.state().attachment_of(red));
    w.place("red", Pose2d(0.1, 0.2, 0.3));
    CHECK_FALSE(w.state().attachment_of(red));
    const int roff = s.scene.dof_offset(red);
    CHECK(w.state().config(roff) == 0.1);
    CHECK(w.state().config(roff + 2) == 0.3);
    REQUIRE_FALSE(w.log().empty());
    CHECK(w.log().back().kind == "drag");
  }
  SUBCASE("unknown object") {
    KinematicState st = s.nominal;
    EffectSpec e;
    e.object = "purple";
    CHECK_THROWS(apply_effect(s.scene, st, e));
  }
}

TEST_CASE("perturbation script triggers fire once") {
  InterferenceSpec spec;
  EffectSpec e;
  e.object = "green";
  auto event = [&](TriggerSpec t) { spec.events.push_back({t, {e}}); };
  TriggerSpec at;
  at.kind = TriggerSpec::Kind::at_time;
  at.time = 1.0;
  event(at);
  TriggerSpec entry;
  entry.kind = TriggerSpec::Kind::controller_entered;
  entry.controller = "pick(green)";
  entry.delay = 0.5;
  event(entry);
  TriggerSpec sig;
  sig.kind = TriggerSpec::Kind::signal;
  sig.signal = Signal::Kind::grasp;
  sig.object = "green";
  event(sig);
  TriggerSpec manual;
  manual.kind = TriggerSpec::Kind::manual;
  event(manual);

  PerturbationScript p(spec);
  CHECK(p.pending_timed());
  CHECK(p.due(0.5).empty());
  CHECK(p.due(1.0).size() == 1);
  CHECK(p.due(2.0).empty());
  CHECK_FALSE(p.pending_timed());

  p.entered("pick(green)", 2.0);
  CHECK(p.pending_timed());
  p.entered("pick(green)", 2.4);  // re-entry does not restart the delay
  CHECK(p.due(2.3).empty());
  CHECK(p.due(2.5).size() == 1);
  CHECK(p.due(9.0).empty());

  CHECK(p.on_signal(Signal::Kind::grasp, "red").empty());
  CHECK(p.on_signal(Signal::Kind::place, "green").empty());
  CHECK(p.on_signal(Signal::Kind::grasp, "green").size() == 1);
  CHECK(p.on_signal(Signal::Kind::grasp, "green").empty());

  CHECK(p.manual().size() == 1);
  CHECK(p.manual().empty());
}
