#include "fc3/scenario.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace fc3 {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string s = "scenario invalid (" + std::to_string(problems.size()) + " problem" +
                  (problems.size() == 1 ? "" : "s") + ")";
  for (const auto& p : problems) s += "\n  " + p;
  return s;
}

using Bindings = std::vector<std::pair<std::string, std::string>>;

// Longest token first so "?xy" is not clobbered by "?x".
std::string substitute(std::string text, Bindings bindings) {
  std::sort(bindings.begin(), bindings.end(),
            [](const auto& l, const auto& r) { return l.first.size() > r.first.size(); });
  for (const auto& [token, value] : bindings) {
    for (std::size_t pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos + value.size()))
      text.replace(pos, token.size(), value);
  }
  return text;
}

class Builder {
 public:
  Builder(const Scene& scene, std::vector<std::string>& problems) : scene_(scene), problems_(problems) {}

  int frame(const std::string& name, const std::string& where) {
    if (scene_.has_frame(name)) return scene_.frame_index(name);
    problem(where + ": unknown frame '" + name + "'");
    return 0;
  }

  FeatureKind feature(const FeatureTemplate& t, const Bindings& b, const std::string& where) {
    const std::string a = substitute(t.a, b), bb = substitute(t.b, b);
    if (t.kind == "position_diff") return feature::PositionDiff{frame(a, where), frame(bb, where), t.target};
    if (t.kind == "distance") return feature::Distance{frame(a, where), frame(bb, where), t.margin};
    if (t.kind == "alignment") return feature::Alignment{frame(a, where), frame(bb, where), t.angle};
    if (t.kind == "pose_equality") return feature::PoseEquality{frame(a, where), frame(bb, where)};
    if (t.kind == "joint_limits") return feature::JointLimitsFeature{};
    problem(where + ": unknown feature kind '" + t.kind + "'");
    return feature::JointLimitsFeature{};
  }

  void constraints(const ConstraintTemplate& t, const Bindings& b, const std::vector<std::string>& objects,
                   const std::string& where, std::vector<ConstraintSpec>& out) {
    std::vector<Bindings> expansions;
    if (t.for_each) {
      std::set<std::string> excluded;
      for (const auto& e : t.for_each->exclude) excluded.insert(substitute(e, b));
      for (const auto& o : objects) {
        if (excluded.contains(o)) continue;
        Bindings ext = b;
        ext.emplace_back(t.for_each->var, o);
        expansions.push_back(std::move(ext));
      }
    } else {
      expansions.push_back(b);
    }
    for (const auto& e : expansions) {
      ConstraintSpec c{feature(t.feature, e, where), t.comparator, t.epsilon, t.scale, substitute(t.label, e), {}};
      if (c.label.empty()) c.label = describe(c.feature, scene_);
      out.push_back(std::move(c));
    }
  }

  Controller controller(const std::string& name, const ControllerTemplate& t, const Bindings& b,
                        const std::vector<std::string>& objects) {
    const std::string where = "controller '" + name + "'";
    Controller c;
    c.name = name;
    for (const auto& cost : t.costs) {
      CostTerm term{feature(cost.feature, b, where), cost.weight, substitute(cost.label, b)};
      if (term.label.empty()) term.label = describe(term.feature, scene_);
      c.costs.push_back(std::move(term));
    }
    for (const auto& g : t.constraints) constraints(g, b, objects, where, c.constraints);
    if (t.signal.kind != Signal::Kind::none) {
      c.signal.kind = t.signal.kind;
      c.signal.holder = frame(substitute(t.signal.holder, b), where + " signal");
      if (t.signal.kind == Signal::Kind::grasp) c.signal.object = frame(substitute(t.signal.object, b), where + " signal");
    }
    for (const auto& l : t.logic) {
      LogicAtom atom{frame(substitute(l.holder, b), where + " logic"), -1};
      if (!l.object.empty()) atom.object = frame(substitute(l.object, b), where + " logic");
      c.logic.push_back(atom);
    }
    return c;
  }

  void problem(std::string p) {
    if (std::find(problems_.begin(), problems_.end(), p) == problems_.end()) problems_.push_back(std::move(p));
  }

 private:
  const Scene& scene_;
  std::vector<std::string>& problems_;
};

Bindings bindings_for(const symbolic::ActionSchema& schema, const std::vector<std::string>& args) {
  Bindings b;
  for (std::size_t i = 0; i < schema.params.size() && i < args.size(); ++i) b.emplace_back(schema.params[i], args[i]);
  return b;
}

std::string controller_name(const symbolic::GroundAction& action, const ActionTemplate& t, std::size_t k) {
  return t.controllers.size() == 1 ? action.str() : action.str() + "/" + t.controllers[k];
}

}  // namespace

ScenarioError::ScenarioError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

Scenario instantiate(ScenarioSpec spec) {
  std::vector<std::string> problems;
  Scenario s;
  Scene& scene = s.scene;
  std::set<std::string> names{"world"};
  auto claim = [&](const std::string& name, const std::string& what) {
    if (name.empty()) {
      problems.push_back(what + ": empty name");
      return false;
    }
    if (!names.insert(name).second) {
      problems.push_back(what + ": duplicate frame name '" + name + "'");
      return false;
    }
    return true;
  };

  const auto& p = spec.params;
  if (!(p.tau > 0)) problems.push_back("params.tau must be positive");
  if (p.n_check < 1) problems.push_back("params.n_check must be at least 1");
  if (!(p.eps_feas > 0)) problems.push_back("params.eps_feas must be positive");
  if (!(p.timeout > 0)) problems.push_back("params.timeout must be positive");
  if (p.explore < 0) problems.push_back("params.explore must be non-negative");
  if (p.trim < 0) problems.push_back("params.trim must be non-negative");
  if (p.jitter < 0) problems.push_back("params.jitter must be non-negative");
  if (!(p.recheck_motion > 0)) problems.push_back("params.recheck_motion must be positive");
  if (!(p.velocity_limit > 0)) problems.push_back("params.velocity_limit must be positive");

  std::vector<std::pair<int, std::vector<double>>> arm_initial;
  for (const auto& arm : spec.arms) {
    const std::string what = "arm '" + arm.name + "'";
    bool ok = true;
    for (const char* suffix : {"_base", "_gripper", "_virtual"}) ok &= claim(arm.name + suffix, what);
    for (std::size_t i = 1; i <= arm.links.size(); ++i) ok &= claim(arm.name + "_j" + std::to_string(i), what);
    if (arm.links.empty()) problems.push_back(what + ": no links");
    if (std::any_of(arm.links.begin(), arm.links.end(), [](double l) { return !(l > 0); }))
      problems.push_back(what + ": link lengths must be positive");
    if (!(arm.limits.lo < arm.limits.hi)) problems.push_back(what + ": joint limits need lo < hi");
    if (!arm.initial.empty() && arm.initial.size() != arm.links.size())
      problems.push_back(what + ": initial has " + std::to_string(arm.initial.size()) + " entries for " +
                         std::to_string(arm.links.size()) + " joints");
    if (!ok || arm.links.empty()) continue;
    const auto frames = add_planar_arm(scene, arm.name, arm.base, arm.links, arm.limits);
    if (!arm.initial.empty() && arm.initial.size() == arm.links.size())
      arm_initial.emplace_back(scene.dof_offset(frames.joints.front()), arm.initial);
  }
  for (const auto& o : spec.objects) {
    if (!claim(o.name, "object '" + o.name + "'")) continue;
    add_object(scene, o.name, o.shape);
  }
  for (const auto& f : spec.frames) {
    if (!claim(f.name, "frame '" + f.name + "'")) continue;
    if (!scene.has_frame(f.parent)) {
      problems.push_back("frame '" + f.name + "': unknown parent '" + f.parent + "'");
      continue;
    }
    scene.add_frame({f.name, scene.frame_index(f.parent), JointType::fixed, f.offset, f.shape, {}});
  }

  VectorXd x = VectorXd::Zero(scene.dim());
  for (const auto& [offset, q] : arm_initial)
    for (std::size_t i = 0; i < q.size(); ++i) x(offset + static_cast<int>(i)) = q[i];
  for (const auto& o : spec.objects)
    if (scene.has_frame(o.name)) set_object_pose(scene, x, scene.frame_index(o.name), o.pose);
  s.nominal = make_state(scene, x);

  // Symbolic domain.
  std::vector<symbolic::ActionSchema> schemas;
  std::set<std::string> action_names;
  for (const auto& a : spec.actions) {
    const std::string what = "action '" + a.schema.name + "'";
    if (!action_names.insert(a.schema.name).second) problems.push_back(what + ": duplicate action name");
    if (a.controllers.empty()) problems.push_back(what + ": no controllers");
    for (const auto& key : a.controllers)
      if (!spec.controllers.contains(key)) problems.push_back(what + ": unknown controller template '" + key + "'");
    schemas.push_back(a.schema);
  }
  s.domain = symbolic::ground(schemas, spec.domain_objects);
  auto parse_atoms = [&](const std::vector<std::string>& atoms, const std::string& what) {
    std::vector<symbolic::Atom> out;
    for (const auto& text : atoms) {
      try {
        out.push_back(symbolic::parse_atom(text));
      } catch (const symbolic::SymbolicError& e) {
        problems.push_back(what + ": " + e.what());
      }
    }
    return s.domain.state(out);
  };
  s.init = parse_atoms(spec.init, "domain.init");
  s.goal_atoms = parse_atoms(spec.goal_atoms, "domain.goal");
  if (spec.goal_atoms.empty()) problems.push_back("domain.goal: empty");

  // Every ground action must instantiate.
  Builder builder(scene, problems);
  std::set<std::string> controller_names;
  for (const auto& action : s.domain.actions()) {
    const auto it = std::find_if(spec.actions.begin(), spec.actions.end(),
                                 [&](const ActionTemplate& t) { return t.schema.name == action.schema; });
    const auto b = bindings_for(it->schema, action.args);
    for (std::size_t k = 0; k < it->controllers.size(); ++k) {
      const auto ct = spec.controllers.find(it->controllers[k]);
      if (ct == spec.controllers.end()) continue;
      const std::string name = controller_name(action, *it, k);
      controller_names.insert(name);
      for (const auto& g : ct->second.constraints)
        if (g.epsilon && !(*g.epsilon > 0))
          builder.problem("controller template '" + ct->first + "': transient epsilon must be positive");
      builder.controller(name, ct->second, b, spec.domain_objects);
    }
  }
  for (const auto& g : spec.goal) builder.constraints(g, {}, spec.domain_objects, "goal", s.goal);
  if (spec.goal.empty()) problems.push_back("goal: no goal constraints");

  std::set<std::string> ids;
  for (const auto& in : spec.interferences) {
    const std::string what = "interference '" + in.id + "'";
    if (!ids.insert(in.id).second) problems.push_back(what + ": duplicate id");
    auto check_effect = [&](const EffectSpec& e) {
      if (!scene.has_frame(e.object) || scene.frame(scene.frame_index(e.object)).joint != JointType::free_planar)
        problems.push_back(what + ": unknown object '" + e.object + "'");
      if (e.kind == EffectSpec::Kind::stack_on && !scene.has_frame(e.onto))
        problems.push_back(what + ": unknown object '" + e.onto + "'");
    };
    for (const auto& e : in.initial) check_effect(e);
    for (const auto& ev : in.events) {
      for (const auto& e : ev.effects) check_effect(e);
      if (ev.trigger.kind == TriggerSpec::Kind::controller_entered && !controller_names.contains(ev.trigger.controller))
        problems.push_back(what + ": unknown controller '" + ev.trigger.controller + "'");
      if (ev.trigger.kind == TriggerSpec::Kind::signal && !ev.trigger.object.empty() &&
          !scene.has_frame(ev.trigger.object))
        problems.push_back(what + ": unknown object '" + ev.trigger.object + "'");
    }
  }
  if (!problems.empty()) throw ScenarioError(std::move(problems));
  s.spec = std::move(spec);
  return s;
}

std::vector<Controller> Scenario::controllers_for(const symbolic::GroundAction& action) const {
  const auto it = std::find_if(spec.actions.begin(), spec.actions.end(),
                               [&](const ActionTemplate& t) { return t.schema.name == action.schema; });
  if (it == spec.actions.end()) throw ScenarioError({"action '" + action.schema + "' has no template"});
  std::vector<std::string> problems;
  Builder builder(scene, problems);
  const auto b = bindings_for(it->schema, action.args);
  std::vector<Controller> out;
  for (std::size_t k = 0; k < it->controllers.size(); ++k)
    out.push_back(builder.controller(controller_name(action, *it, k), spec.controllers.at(it->controllers[k]), b,
                                     spec.domain_objects));
  if (!problems.empty()) throw ScenarioError(std::move(problems));
  return out;
}

const InterferenceSpec& Scenario::interference(const std::string& id) const {
  for (const auto& in : spec.interferences)
    if (in.id == id) return in;
  throw ScenarioError({"scenario '" + spec.name + "' has no interference '" + id + "'"});
}

std::vector<std::string> Scenario::interference_ids() const {
  std::vector<std::string> ids;
  for (const auto& in : spec.interferences) ids.push_back(in.id);
  return ids;
}

int Scenario::frame(const std::string& name) const { return scene.frame_index(name); }

KinematicState Scenario::initial_state(const std::string& interference_id, std::uint64_t seed) const {
  KinematicState st = nominal;
  for (const auto& e : interference(interference_id).initial) apply_effect(scene, st, e);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spec.params.jitter, spec.params.jitter);
  for (const auto& o : spec.objects) {
    const int f = scene.frame_index(o.name);
    const int off = scene.dof_offset(f);
    const double dx = u(rng), dy = u(rng);
    if (spec.params.jitter > 0) {
      st.config(off) += dx;
      st.config(off + 1) += dy;
    }
  }
  return st;
}

void apply_effect(const Scene& scene, KinematicState& state, const EffectSpec& effect) {
  const int object = scene.frame_index(effect.object);
  if (state.attachment_of(object)) state = detach(scene, state, object);
  const Pose2d current = forward_kinematics(scene, state.config, state.attachments)[static_cast<std::size_t>(object)];
  Pose2d target = current;
  switch (effect.kind) {
    case EffectSpec::Kind::teleport:
      target = Pose2d(effect.pose.t.x(), effect.pose.t.y(), effect.keep_theta ? current.theta : effect.pose.theta);
      break;
    case EffectSpec::Kind::shift:
      target = Pose2d(current.t.x() + effect.delta.x(), current.t.y() + effect.delta.y(), current.theta);
      break;
    case EffectSpec::Kind::stack_on: {
      const Pose2d onto =
          forward_kinematics(scene, state.config, state.attachments)[static_cast<std::size_t>(scene.frame_index(effect.onto))];
      target = Pose2d(onto.t.x(), onto.t.y(), current.theta);
      break;
    }
  }
  set_object_pose(scene, state.config, object, target);
  const int off = scene.dof_offset(object);
  state.velocity.segment(off, 3).setZero();
  sync_attached(scene, state);
}

Library build_library(const Scenario& scenario, const KinematicState& anchor, const ControlSettings& settings) {
  symbolic::TreeOptions options;
  options.explore = scenario.spec.params.explore;
  const auto full = symbolic::generate_action_tree(scenario.domain, scenario.goal_atoms, scenario.init, options);
  Library lib;
  lib.tree = full.plan_found ? symbolic::trim_action_tree(full, scenario.spec.params.trim) : full;
  lib.chains = symbolic::build_controller_chains(
      scenario.domain, lib.tree, [&](const symbolic::GroundAction& a) { return scenario.controllers_for(a); },
      scenario.goal);
  for (auto& chain : lib.chains) lib.propagation.push_back(propagate_implicit(scenario.scene, chain, anchor, settings));
  return lib;
}

ControlSettings control_settings(const ScenarioParams& params) {
  ControlSettings s;
  s.tau = params.tau;
  s.eps_feas = params.eps_feas;
  return s;
}

std::string bundled_scenario_path(const std::string& name) { return std::string(FC3_SCENARIO_DIR) + "/" + name + ".json"; }

Scenario build_scenario(const std::string& name) { return load_scenario(bundled_scenario_path(name)); }

}  // namespace fc3
