#include "fc3/controller.hpp"

#include <algorithm>
#include <memory>

namespace fc3 {

const char* to_string(Signal::Kind kind) {
  switch (kind) {
    case Signal::Kind::grasp: return "grasp";
    case Signal::Kind::place: return "place";
    default: return "none";
  }
}

std::string constraint_id(const ConstraintSpec& c, const Scene& scene) {
  return c.label.empty() ? describe(c.feature, scene) : c.label;
}

bool logic_satisfied(std::span<const LogicAtom> logic, std::span<const Attachment> attachments) {
  for (const auto& atom : logic) {
    bool holding_any = false;
    bool holding_it = false;
    for (const auto& a : attachments) {
      if (a.holder != atom.holder) continue;
      holding_any = true;
      holding_it = holding_it || a.object == atom.object;
    }
    if (atom.free() ? holding_any : !holding_it) return false;
  }
  return true;
}

Attachments attachments_for_logic(std::span<const LogicAtom> logic, std::span<const Attachment> current) {
  Attachments out(current.begin(), current.end());
  for (const auto& atom : logic) {
    if (atom.free()) {
      std::erase_if(out, [&](const Attachment& a) { return a.holder == atom.holder; });
      continue;
    }
    const bool present = std::any_of(out.begin(), out.end(), [&](const Attachment& a) {
      return a.holder == atom.holder && a.object == atom.object;
    });
    if (present) continue;
    std::erase_if(out, [&](const Attachment& a) { return a.object == atom.object || a.holder == atom.holder; });
    out.push_back({atom.holder, atom.object, Pose2d::identity()});
  }
  return out;
}

namespace {

void check_constraints(const Scene& scene, const std::vector<const ConstraintSpec*>& cs, const VectorXd& config,
                       std::span<const Attachment> attachments, FeasibilityReport& r) {
  if (cs.empty()) return;
  const auto world = forward_kinematics(scene, config, attachments);
  for (const ConstraintSpec* c : cs) {
    // Velocity-level features have no meaning at a single configuration.
    if (needs_previous_state(c->feature)) continue;
    const double v = violation(c->comparator, evaluate(*c, EvalContext{scene, config, attachments, nullptr, nullptr, &world}).value);
    r.max_violation = std::max(r.max_violation, v);
    if (v > 0.0) r.violated.push_back(constraint_id(*c, scene));
  }
}

}  // namespace

FeasibilityReport immediate_feasible(const Scene& scene, const Controller& c, const VectorXd& config,
                                     std::span<const Attachment> attachments, double eps_feas) {
  FeasibilityReport r;
  std::vector<const ConstraintSpec*> cs;
  for (const auto& g : c.constraints)
    if (g.immediate()) cs.push_back(&g);
  for (const auto& g : c.implicit_constraints) cs.push_back(&g);
  check_constraints(scene, cs, config, attachments, r);
  r.logic_ok = logic_satisfied(c.logic, attachments);
  r.holds = r.max_violation <= eps_feas && r.logic_ok;
  return r;
}

FeasibilityReport final_feasible(const Scene& scene, const Controller& c, const VectorXd& config,
                                 std::span<const Attachment> attachments, double eps_feas) {
  FeasibilityReport r;
  std::vector<const ConstraintSpec*> cs;
  for (const auto& g : c.constraints) cs.push_back(&g);
  for (const auto& g : c.implicit_constraints) cs.push_back(&g);
  check_constraints(scene, cs, config, attachments, r);
  r.holds = r.max_violation <= eps_feas;
  return r;
}

TransientTrackers enter_controller(const Scene& scene, const Controller& c, const KinematicState& state, double tau) {
  TransientTrackers out(c.constraints.size());
  for (size_t i = 0; i < c.constraints.size(); ++i) {
    const auto& g = c.constraints[i];
    if (g.immediate()) continue;
    const auto fv = evaluate(g, EvalContext{scene, state.config, state.attachments});
    out[i].emplace(fv.value, *g.transient_epsilon, tau);
  }
  return out;
}

namespace detail {

RobotConfigMap::RobotConfigMap(const Scene& scene, VectorXd base, Attachments attachments)
    : scene_(&scene), config_(std::move(base)), attachments_(std::move(attachments)) {}

void RobotConfigMap::update(const VectorXd& x) {
  if (valid_ && x.size() == last_.size() && x == last_) return;
  const auto& d = dofs();
  for (size_t i = 0; i < d.size(); ++i) config_(d[i]) = x(static_cast<Eigen::Index>(i));
  world_ = forward_kinematics(*scene_, config_, attachments_);
  last_ = x;
  valid_ = true;
}

VectorXd RobotConfigMap::reduce(const VectorXd& config) const {
  return config(dofs());
}

void joint_bounds(const Scene& scene, nlp::Problem<double>& p) {
  constexpr double big = 1e6;
  VectorXd lo = VectorXd::Constant(p.dim, -big);
  VectorXd hi = VectorXd::Constant(p.dim, big);
  const auto& dofs = scene.robot_dofs();
  const int per = static_cast<int>(dofs.size());
  for (int f = 0; f < scene.frame_count(); ++f) {
    const auto& fr = scene.frame(f);
    if (fr.joint != JointType::revolute || !fr.limits) continue;
    const int k = static_cast<int>(std::find(dofs.begin(), dofs.end(), scene.dof_offset(f)) - dofs.begin());
    for (int base = 0; base + per <= p.dim; base += per) {
      lo(base + k) = fr.limits->lo;
      hi(base + k) = fr.limits->hi;
    }
  }
  p.lower = lo;
  p.upper = hi;
}

}  // namespace detail

namespace {

using Map = detail::RobotConfigMap;

nlp::Term<double> feature_term(std::shared_ptr<Map> map, FeatureKind kind, double scale, VectorXd shift,
                               std::string label, double weight = 1.0) {
  const int dim = feature_dim(kind, map->scene());
  return {dim,
          [map, kind = std::move(kind), scale, shift = std::move(shift)](const VectorXd& x, VectorXd& v, MatrixXd& J) {
            map->update(x);
            const auto fv = evaluate(kind, EvalContext{map->scene(), map->config(), map->attachments(), nullptr,
                                                       nullptr, &map->world()});
            v = scale * fv.value;
            if (shift.size()) v -= shift;
            J = scale * fv.jacobian(Eigen::all, map->dofs());
          },
          weight, std::move(label)};
}

void add_constraint(nlp::Problem<double>& p, std::shared_ptr<Map> map, const ConstraintSpec& c, VectorXd shift,
                    const Scene& scene) {
  auto term = feature_term(std::move(map), c.feature, c.scale, std::move(shift), constraint_id(c, scene));
  (c.comparator == Comparator::eq ? p.equalities : p.inequalities).push_back(std::move(term));
}

void add_costs(nlp::Problem<double>& p, const std::shared_ptr<Map>& map, const Controller& c, const Scene& scene) {
  for (const auto& cost : c.costs) {
    if (needs_previous_state(cost.feature)) continue;
    p.residuals.push_back(feature_term(map, cost.feature, 1.0, {}, cost.label.empty() ? describe(cost.feature, scene) : cost.label,
                                       cost.weight));
  }
}

nlp::Term<double> anchor_term(VectorXd anchor, double gain, std::string label) {
  const int n = static_cast<int>(anchor.size());
  return {n,
          [anchor = std::move(anchor), gain](const VectorXd& x, VectorXd& v, MatrixXd& J) {
            v = gain * (x - anchor);
            J = gain * MatrixXd::Identity(x.size(), x.size());
          },
          1.0, std::move(label)};
}

}  // namespace

nlp::Problem<double> step_problem(const Scene& scene, const Controller& c, const TransientTrackers& trackers,
                                  const KinematicState& state, const ControlSettings& settings) {
  auto map = std::make_shared<Map>(scene, state.config, state.attachments);
  nlp::Problem<double> p;
  p.dim = static_cast<int>(scene.robot_dofs().size());
  const VectorXd x0 = map->reduce(state.config);
  const VectorXd v0 = state.velocity.size() ? map->reduce(state.velocity) : VectorXd::Zero(p.dim);
  const double tau = settings.tau;

  p.residuals.push_back(anchor_term(x0 + tau * v0, settings.alpha / tau, "control"));
  if (settings.damping > 0.0) p.residuals.push_back(anchor_term(x0, settings.damping / tau, "damping"));
  add_costs(p, map, c, scene);

  const auto world = forward_kinematics(scene, state.config, state.attachments);
  // Immediate constraints hold their current residual (within eps_feas after the F_I gate).
  auto residual = [&](const ConstraintSpec& g) -> VectorXd {
    const VectorXd v = evaluate(g, EvalContext{scene, state.config, state.attachments, nullptr, nullptr, &world}).value;
    return g.comparator == Comparator::eq ? v : VectorXd(v.cwiseMax(0.0));
  };
  for (size_t i = 0; i < c.constraints.size(); ++i) {
    const auto& g = c.constraints[i];
    if (needs_previous_state(g.feature)) continue;
    VectorXd shift;
    if (!g.immediate()) {
      if (i >= trackers.size() || !trackers[i]) throw ControlError("controller '" + c.name + "' entered without trackers");
      const VectorXd err =
          evaluate(g, EvalContext{scene, state.config, state.attachments, nullptr, nullptr, &world}).value;
      shift = transient_target(*trackers[i], err, g.comparator);
    } else {
      shift = residual(g);
    }
    add_constraint(p, map, g, std::move(shift), scene);
  }
  for (const auto& g : c.implicit_constraints) add_constraint(p, map, g, residual(g), scene);
  detail::joint_bounds(scene, p);
  return p;
}

VectorXd step(const Scene& scene, const Controller& c, const TransientTrackers& trackers, const KinematicState& state,
              const ControlSettings& settings) {
  const auto fi = immediate_feasible(scene, c, state.config, state.attachments, settings.eps_feas);
  if (fi.max_violation > settings.eps_feas)
    throw ControlError("controller '" + c.name + "': immediate constraint violated (" +
                       (fi.violated.empty() ? std::string("?") : fi.violated.front()) + ")");
  const auto p = step_problem(scene, c, trackers, state, settings);
  const auto& dofs = scene.robot_dofs();
  VectorXd warm = state.config(dofs);
  if (state.velocity.size()) warm += settings.tau * state.velocity(dofs);
  warm = warm.cwiseMax(*p.lower).cwiseMin(*p.upper);
  const auto sol = nlp::solve(p, warm, settings.solver);
  if (!sol.feasible)
    throw ControlError("controller '" + c.name + "': step infeasible (violation " + std::to_string(sol.max_violation) + ")");
  VectorXd next = state.config;
  next(dofs) = sol.x_star;
  return next;
}

std::vector<VectorXd> alternative_seeds(const Scene& scene, const VectorXd& config) {
  VectorXd flipped = config;
  VectorXd zero = config;
  for (int f = 0; f < scene.frame_count(); ++f) {
    const auto& fr = scene.frame(f);
    if (fr.joint != JointType::revolute) continue;
    const int d = scene.dof_offset(f);
    zero(d) = 0.0;
    bool first = true;
    for (int a = fr.parent; a > 0; a = scene.frame(a).parent)
      if (scene.frame(a).joint == JointType::revolute) first = false;
    if (!first) flipped(d) = -config(d);
    if (!first && std::abs(config(d)) < 0.3) flipped(d) = config(d) < 0 ? 0.8 : -0.8;
  }
  return {flipped, zero};
}

TerminalResult solve_terminal(const Scene& scene, const Controller& c, const KinematicState& seed,
                              const ControlSettings& settings, bool include_implicit) {
  const Attachments att = attachments_for_logic(c.logic, seed.attachments);
  auto map = std::make_shared<Map>(scene, seed.config, att);
  nlp::Problem<double> p;
  p.dim = static_cast<int>(scene.robot_dofs().size());
  const VectorXd x0 = map->reduce(seed.config);
  p.residuals.push_back(anchor_term(x0, std::sqrt(settings.terminal_regularization), "regularization"));
  add_costs(p, map, c, scene);
  for (const auto& g : c.constraints)
    if (!needs_previous_state(g.feature)) add_constraint(p, map, g, {}, scene);
  if (include_implicit)
    for (const auto& g : c.implicit_constraints) add_constraint(p, map, g, {}, scene);
  detail::joint_bounds(scene, p);

  TerminalResult best;
  best.max_violation = std::numeric_limits<double>::infinity();
  std::vector<VectorXd> seeds{x0};
  for (const auto& s : alternative_seeds(scene, seed.config)) seeds.push_back(map->reduce(s));
  for (const auto& s : seeds) {
    const auto sol = nlp::solve(p, VectorXd(s.cwiseMax(*p.lower).cwiseMin(*p.upper)), settings.solver);
    if (sol.max_violation < best.max_violation) {
      best.config = seed.config;
      best.config(scene.robot_dofs()) = sol.x_star;
      best.max_violation = sol.max_violation;
    }
    if (sol.feasible) break;
  }
  // Predicate check at the caller's tolerance, on the attachments the solve assumed.
  const auto ft = final_feasible(scene, include_implicit ? c : Controller{c.name, {}, c.constraints, {}, {}, {}},
                                 best.config, att, settings.eps_feas);
  best.feasible = ft.holds;
  best.max_violation = ft.max_violation;
  return best;
}

KinematicState fire_signal(const Scene& scene, const Controller& c, const KinematicState& state,
                           const GraspTolerance& tol) {
  const Signal& s = c.signal;
  switch (s.kind) {
    case Signal::Kind::none: return state;
    case Signal::Kind::grasp: {
      if (const Attachment* a = state.attachment_of(s.object)) {
        if (a->holder == s.holder) return state;
        // Grasping an object held elsewhere hands it over.
        return attach(scene, detach(scene, state, s.object), s.holder, s.object, tol);
      }
      return attach(scene, state, s.holder, s.object, tol);
    }
    case Signal::Kind::place: {
      const int held = state.held_by(s.holder);
      if (held < 0) return state;
      return detach(scene, state, held);
    }
  }
  return state;
}

}  // namespace fc3
