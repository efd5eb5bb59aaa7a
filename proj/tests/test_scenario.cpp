#include <doctest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "fc3/scenario.hpp"

using namespace fc3;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool mentions(const ScenarioError& e, const std::string& needle) {
  for (const auto& p : e.problems())
    if (p.find(needle) != std::string::npos) return true;
  return false;
}

std::vector<std::string> instantiate_problems(const nlohmann::json& doc) {
  try {
    instantiate(parse_scenario(doc.dump()));
  } catch (const ScenarioError& e) {
    return e.problems();
  }
  return {};
}

int chain_index(const Library& lib, const std::vector<std::string>& source) {
  for (std::size_t i = 0; i < lib.chains.size(); ++i)
    if (lib.chains[i].source == source) return static_cast<int>(i);
  return -1;
}

const symbolic::GroundAction& ground_action(const Scenario& s, const std::string& name) {
  for (const auto& a : s.domain.actions())
    if (a.str() == name) return a;
  FAIL("no ground action " << name);
  throw;
}

}  // namespace

TEST_CASE("bundled scenarios load") {
  for (const char* name : {"tower", "stick", "handover"}) {
    CAPTURE(name);
    const Scenario s = build_scenario(name);
    CHECK(s.spec.name == name);
    CHECK_FALSE(s.goal.empty());
    CHECK(s.interference_ids().front() == "I0");
  }
  CHECK(build_scenario("tower").interference_ids().size() == 7);
  CHECK(build_scenario("stick").interference_ids().size() == 5);
  CHECK(build_scenario("handover").interference_ids().size() == 6);
}

TEST_CASE("load errors name the offending item") {
  const auto tower = nlohmann::json::parse(read_file(bundled_scenario_path("tower")));

  SUBCASE("unknown controller template") {
    auto doc = tower;
    doc["domain"]["actions"][0]["controllers"] = {"grab"};
    const auto problems = instantiate_problems(doc);
    REQUIRE_FALSE(problems.empty());
    bool named = false;
    for (const auto& p : problems) named |= p.find("unknown controller template 'grab'") != std::string::npos;
    CHECK(named);
  }
  SUBCASE("duplicate frame name") {
    auto doc = tower;
    doc["world"]["objects"][1]["name"] = doc["world"]["objects"][0]["name"];
    const auto problems = instantiate_problems(doc);
    bool named = false;
    for (const auto& p : problems) named |= p.find("duplicate frame name 'blue'") != std::string::npos;
    CHECK(named);
  }
  SUBCASE("every problem is reported") {
    auto doc = tower;
    doc["params"]["tau"] = 0.0;
    doc["params"]["eps_feas"] = -1.0;
    doc["unexpected"] = 1;
    try {
      instantiate(parse_scenario(doc.dump()));
      FAIL("expected a load error");
    } catch (const ScenarioError& e) {
      CHECK(mentions(e, "unexpected"));
    }
    doc.erase("unexpected");
    try {
      instantiate(parse_scenario(doc.dump()));
      FAIL("expected a load error");
    } catch (const ScenarioError& e) {
      CHECK(mentions(e, "tau"));
      CHECK(mentions(e, "eps_feas"));
    }
  }
  SUBCASE("malformed text") { CHECK_THROWS_AS(parse_scenario("{\"name\": "), ScenarioError); }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_scenario("/nonexistent/x.json"), ScenarioError); }
}

TEST_CASE("dump and parse round-trip") {
  for (const char* name : {"tower", "stick", "handover"}) {
    CAPTURE(name);
    const std::string once = dump_scenario(parse_scenario(read_file(bundled_scenario_path(name))));
    const std::string twice = dump_scenario(parse_scenario(once));
    CHECK(once == twice);
    const Scenario a = build_scenario(name);
    const Scenario b = instantiate(parse_scenario(once));
    CHECK(a.scene.frame_count() == b.scene.frame_count());
    CHECK(a.nominal.config.isApprox(b.nominal.config));
    CHECK(a.domain.actions().size() == b.domain.actions().size());
  }
}

TEST_CASE("implicit constraints are exactly the violated successor constraints") {
  for (const char* name : {"tower", "stick", "handover"}) {
    CAPTURE(name);
    const Scenario s = build_scenario(name);
    const auto settings = control_settings(s.spec.params);
    const double eps = settings.eps_feas;
    const Library lib = build_library(s, s.nominal, settings);
    REQUIRE_FALSE(lib.chains.empty());
    for (std::size_t c = 0; c < lib.chains.size(); ++c) {
      const auto& chain = lib.chains[c];
      const auto& rep = lib.propagation[c];
      CAPTURE(c);
      for (int i = 0; i < chain.size(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const std::set<std::string> added(rep.added[ui].begin(), rep.added[ui].end());
        if (!rep.anchor_feasible[ui]) {
          CHECK(added.empty());
          continue;
        }
        // Oracle: evaluate every successor constraint at the anchor.
        std::vector<const ConstraintSpec*> successor;
        if (i + 1 < chain.size()) {
          const auto& next = chain.controllers[ui + 1];
          for (const auto& g : next.constraints)
            if (g.immediate()) successor.push_back(&g);
          for (const auto& g : next.implicit_constraints) successor.push_back(&g);
        } else {
          for (const auto& g : chain.goal) successor.push_back(&g);
        }
        const Attachments held = attachments_for_logic(chain.controllers[ui].logic, s.nominal.attachments);
        std::set<std::string> expected;
        for (const ConstraintSpec* g : successor) {
          const double v = violation(g->comparator, evaluate(*g, EvalContext{s.scene, rep.anchors[ui], held}).value);
          if (v > eps) expected.insert(constraint_id(*g, s.scene));
        }
        CHECK(added == expected);
      }
      // A second pass adds nothing.
      ControllerChain again = chain;
      const auto second = propagate_implicit(s.scene, again, s.nominal, settings);
      for (const auto& a : second.added) CHECK(a.empty());
      for (int i = 0; i < chain.size(); ++i)
        CHECK(again.controllers[static_cast<std::size_t>(i)].implicit_constraints.size() ==
              chain.controllers[static_cast<std::size_t>(i)].implicit_constraints.size());
    }
  }
}

TEST_CASE("libraries contain the expected plan families") {
  SUBCASE("tower") {
    const Scenario s = build_scenario("tower");
    const Library lib = build_library(s, s.nominal, control_settings(s.spec.params));
    CHECK(chain_index(lib, {"pick(green)", "stack(green,blue)", "pick(red)", "stack(red,green)"}) >= 0);
    // Recovery when red is held and green has fallen off.
    CHECK(chain_index(lib, {"putdown(red)", "pick(green)", "stack(green,blue)", "pick(red)", "stack(red,green)"}) >= 0);
  }
  SUBCASE("stick") {
    const Scenario s = build_scenario("stick");
    const Library lib = build_library(s, s.nominal, control_settings(s.spec.params));
    CHECK(chain_index(lib, {"pick_block", "place_goal"}) >= 0);
    CHECK(chain_index(lib, {"pick_stick", "hook", "pull"}) >= 0);
  }
  SUBCASE("handover") {
    const Scenario s = build_scenario("handover");
    const Library lib = build_library(s, s.nominal, control_settings(s.spec.params));
    CHECK(chain_index(lib, {"pick_r(block)", "place_goal_r(block)"}) >= 0);
    CHECK(chain_index(lib, {"pick_l(block)", "handover_l_r(block)", "place_goal_r(block)"}) >= 0);
  }
}

TEST_CASE("sequence feasibility separates the plan families") {
  SUBCASE("stick: block beyond the arm but within stick range") {
    const Scenario s = build_scenario("stick");
    const auto settings = control_settings(s.spec.params);
    const Library lib = build_library(s, s.nominal, settings);
    KinematicState st = s.nominal;
    for (const auto& e : s.interference("I3").events[0].effects) apply_effect(s.scene, st, e);
    SequenceSettings seq;
    seq.control = settings;
    const int pick_place = chain_index(lib, {"pick_block", "place_goal"});
    const int stick = chain_index(lib, {"pick_stick", "hook", "pull"});
    REQUIRE(pick_place >= 0);
    REQUIRE(stick >= 0);
    CHECK_FALSE(sequence_feasible(s.scene, lib.chains[static_cast<std::size_t>(pick_place)], 0, st, seq).feasible);
    CHECK(sequence_feasible(s.scene, lib.chains[static_cast<std::size_t>(stick)], 0, st, seq).feasible);
  }
  SUBCASE("tower: red out of reach makes every chain infeasible") {
    const Scenario s = build_scenario("tower");
    const auto settings = control_settings(s.spec.params);
    const Library lib = build_library(s, s.nominal, settings);
    KinematicState st = s.nominal;
    for (const auto& e : s.interference("I4").events[0].effects) apply_effect(s.scene, st, e);
    SequenceSettings seq;
    seq.control = settings;
    for (const auto& chain : lib.chains) CHECK_FALSE(sequence_feasible(s.scene, chain, 0, st, seq).feasible);
  }
}

TEST_CASE("reach terminal solve agrees with workspace sampling") {
  const Scenario s = build_scenario("tower");
  const auto settings = control_settings(s.spec.params);
  const auto controllers = s.controllers_for(ground_action(s, "pick(red)"));
  REQUIRE(controllers.size() == 1);
  const Controller& pick = controllers[0];
  const int red = s.frame("red");
  const int gripper = s.frame("arm_gripper");
  const auto dofs = s.scene.robot_dofs();
  REQUIRE(dofs.size() == 3);

  // Gripper positions over a joint grid; the grid minimum overestimates the true
  // minimum distance by at most lipschitz * half_step.
  const int steps = 64;
  const double lo = -2.6, hi = 2.6, h = (hi - lo) / (steps - 1);
  const double lipschitz = 0.55 + 0.3 + 0.1;
  std::vector<Eigen::Vector2d> samples;
  samples.reserve(steps * steps * steps);
  VectorXd q = s.nominal.config;
  for (int a = 0; a < steps; ++a)
    for (int b = 0; b < steps; ++b)
      for (int c = 0; c < steps; ++c) {
        q(dofs[0]) = lo + a * h;
        q(dofs[1]) = lo + b * h;
        q(dofs[2]) = lo + c * h;
        samples.push_back(forward_kinematics(s.scene, q, {})[static_cast<std::size_t>(gripper)].t);
      }

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> radius(0.1, 1.2), angle(0.0, 3.14159);
  int far = 0, near = 0;
  for (int trial = 0; trial < 24; ++trial) {
    const double r = radius(rng), phi = angle(rng);
    const Eigen::Vector2d target(r * std::cos(phi), r * std::sin(phi));
    double best = 1e9;
    for (const auto& p : samples) best = std::min(best, (p - target).norm());
    KinematicState st = s.nominal;
    const int off = s.scene.dof_offset(red);
    st.config(off) = target.x();
    st.config(off + 1) = target.y();
    const bool feasible = solve_terminal(s.scene, pick, st, settings).feasible;
    CAPTURE(target.transpose());
    CAPTURE(best);
    if (best > lipschitz * h / 2 + settings.eps_feas) {
      ++far;
      CHECK_FALSE(feasible);
    }
    if (r < 0.5 && best < 0.02) {
      ++near;
      CHECK(feasible);
    }
  }
  CHECK(far > 0);
  CHECK(near > 0);
}

TEST_CASE("initial state applies the interference before jitter") {
  const Scenario s = build_scenario("handover");
  const int block = s.frame("block");
  const int off = s.scene.dof_offset(block);
  const auto a = s.initial_state("I3", 11);
  const auto b = s.initial_state("I3", 11);
  const auto c = s.initial_state("I3", 12);
  CHECK(a.config == b.config);
  CHECK(a.config != c.config);
  CHECK(std::abs(a.config(off) + 0.45) <= s.spec.params.jitter + 1e-12);
  CHECK(std::abs(a.config(off + 1) - 0.3) <= s.spec.params.jitter + 1e-12);
  for (int i : s.scene.robot_dofs()) CHECK(a.config(i) == s.nominal.config(i));
}
