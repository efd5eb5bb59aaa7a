#include "fc3/chain.hpp"

#include <algorithm>
#include <memory>

namespace fc3 {

std::string ControllerChain::describe() const {
  std::string s;
  for (const auto& c : controllers) s += (s.empty() ? "" : " -> ") + c.name;
  return s.empty() ? "<goal>" : s;
}

Attachments apply_signal(const Signal& signal, std::span<const Attachment> holdings) {
  Attachments out(holdings.begin(), holdings.end());
  switch (signal.kind) {
    case Signal::Kind::none: break;
    case Signal::Kind::grasp: {
      const bool already = std::any_of(out.begin(), out.end(), [&](const Attachment& a) {
        return a.holder == signal.holder && a.object == signal.object;
      });
      if (already) break;
      std::erase_if(out, [&](const Attachment& a) { return a.object == signal.object; });
      out.push_back({signal.holder, signal.object, Pose2d::identity()});
      break;
    }
    case Signal::Kind::place:
      std::erase_if(out, [&](const Attachment& a) { return a.holder == signal.holder; });
      break;
  }
  return out;
}

std::optional<std::vector<Attachments>> phase_holdings(const ControllerChain& chain, int from,
                                                       std::span<const Attachment> current) {
  std::vector<Attachments> h;
  h.emplace_back(current.begin(), current.end());
  for (int k = from; k < chain.size(); ++k) {
    const Controller& c = chain.controllers[static_cast<size_t>(k)];
    if (!logic_satisfied(c.logic, h.back())) return std::nullopt;
    h.push_back(apply_signal(c.signal, h.back()));
  }
  return h;
}

bool goal_satisfied(const Scene& scene, std::span<const ConstraintSpec> goal, const VectorXd& config,
                    std::span<const Attachment> attachments, double eps_feas) {
  if (goal.empty()) return true;
  const auto world = forward_kinematics(scene, config, attachments);
  for (const auto& g : goal) {
    const auto v = evaluate(g, EvalContext{scene, config, attachments, nullptr, nullptr, &world}).value;
    if (violation(g.comparator, v) > eps_feas) return false;
  }
  return true;
}

namespace {

std::vector<const ConstraintSpec*> immediate_of(const Controller& c) {
  std::vector<const ConstraintSpec*> out;
  for (const auto& g : c.constraints)
    if (g.immediate() && !needs_previous_state(g.feature)) out.push_back(&g);
  for (const auto& g : c.implicit_constraints) out.push_back(&g);
  return out;
}

std::vector<const ConstraintSpec*> all_of(const Controller& c) {
  std::vector<const ConstraintSpec*> out;
  for (const auto& g : c.constraints)
    if (!needs_previous_state(g.feature)) out.push_back(&g);
  for (const auto& g : c.implicit_constraints) out.push_back(&g);
  return out;
}

/// Configurations of every waypoint as a function of the stacked robot joints.
/// Objects keep their pose between waypoints unless held; a released object
/// takes the pose it had in its holder at the releasing waypoint.
class WaypointMap {
 public:
  WaypointMap(const Scene& scene, VectorXd start, std::vector<Attachments> holdings)
      : scene_(&scene), start_(std::move(start)), h_(std::move(holdings)) {
    m_ = static_cast<int>(h_.size()) - 1;
    r_ = static_cast<int>(scene.robot_dofs().size());
    pre_.resize(static_cast<size_t>(m_));
    post_.resize(static_cast<size_t>(m_));
  }

  struct Point {
    VectorXd config;
    MatrixXd d;  // d config / d x
    std::vector<Pose2d> world;
  };

  int waypoints() const { return m_; }
  int robot_dofs() const { return r_; }
  const Scene& scene() const { return *scene_; }
  const Attachments& holdings(int j) const { return h_[static_cast<size_t>(j)]; }

  void update(const VectorXd& x) {
    if (valid_ && x == last_) return;
    const Scene& s = *scene_;
    const auto& dofs = s.robot_dofs();
    const int n = static_cast<int>(x.size());
    VectorXd c = start_;
    MatrixXd d = MatrixXd::Zero(s.dim(), n);
    for (int j = 0; j < m_; ++j) {
      Point& pre = pre_[static_cast<size_t>(j)];
      pre.config = c;
      pre.d = d;
      for (int i = 0; i < r_; ++i) {
        pre.config(dofs[static_cast<size_t>(i)]) = x(j * r_ + i);
        pre.d.row(dofs[static_cast<size_t>(i)]).setZero();
        pre.d(dofs[static_cast<size_t>(i)], j * r_ + i) = 1.0;
      }
      const Attachments& h = h_[static_cast<size_t>(j)];
      const Attachments& hn = h_[static_cast<size_t>(j + 1)];
      pre.world = forward_kinematics(s, pre.config, h);

      Point& post = post_[static_cast<size_t>(j)];
      post.config = pre.config;
      post.d = pre.d;
      for (const auto& a : h) {
        const bool still_held = std::any_of(hn.begin(), hn.end(), [&](const Attachment& b) { return b.object == a.object; });
        if (still_held) continue;
        const int off = s.dof_offset(a.object);
        const Pose2d& p = pre.world[static_cast<size_t>(a.object)];
        post.config.segment<3>(off) << p.x(), p.y(), p.theta;
        post.d.middleRows(off, 3) = jacobian(s, pre.world, a.object, Query::pose, h) * pre.d;
      }
      post.world = forward_kinematics(s, post.config, hn);
      c = post.config;
      d = post.d;
    }
    last_ = x;
    valid_ = true;
  }

  const Point& pre(int j) const { return pre_[static_cast<size_t>(j)]; }
  const Point& post(int j) const { return post_[static_cast<size_t>(j)]; }

 private:
  const Scene* scene_;
  VectorXd start_;
  std::vector<Attachments> h_;
  int m_ = 0;
  int r_ = 0;
  std::vector<Point> pre_, post_;
  VectorXd last_;
  bool valid_ = false;
};

nlp::Term<double> waypoint_term(std::shared_ptr<WaypointMap> map, int j, bool post, FeatureKind kind, double scale,
                                std::string label, double weight = 1.0) {
  const int dim = feature_dim(kind, map->scene());
  return {dim,
          [map, j, post, kind = std::move(kind), scale](const VectorXd& x, VectorXd& v, MatrixXd& J) {
            map->update(x);
            const auto& pt = post ? map->post(j) : map->pre(j);
            const auto& h = map->holdings(post ? j + 1 : j);
            const auto fv = evaluate(kind, EvalContext{map->scene(), pt.config, h, nullptr, nullptr, &pt.world});
            v = scale * fv.value;
            J = scale * (fv.jacobian * pt.d);
          },
          weight, std::move(label)};
}

void add_waypoint_constraint(nlp::Problem<double>& p, const std::shared_ptr<WaypointMap>& map, int j, bool post,
                             const ConstraintSpec& c, const Scene& scene) {
  auto t = waypoint_term(map, j, post, c.feature, c.scale, constraint_id(c, scene) + "@" + std::to_string(j));
  (c.comparator == Comparator::eq ? p.equalities : p.inequalities).push_back(std::move(t));
}

struct WaypointSpec {
  std::vector<const Controller*> controllers;
  std::vector<const ConstraintSpec*> final_constraints;
  std::vector<Attachments> holdings;  // controllers.size() + 1
};

SequenceResult solve_waypoints(const Scene& scene, const WaypointSpec& spec, const KinematicState& current,
                               const SequenceSettings& settings) {
  KinematicState start = current;
  sync_attached(scene, start);
  const int m = static_cast<int>(spec.controllers.size());
  const int r = static_cast<int>(scene.robot_dofs().size());
  auto map = std::make_shared<WaypointMap>(scene, start.config, spec.holdings);

  nlp::Problem<double> p;
  p.dim = m * r;
  const VectorXd x0 = start.config(scene.robot_dofs());
  const double gain = std::sqrt(settings.motion_weight);
  for (int j = 0; j < m; ++j) {
    p.residuals.push_back({r,
                           [j, r, gain, x0](const VectorXd& x, VectorXd& v, MatrixXd& J) {
                             J.setZero(r, x.size());
                             v = gain * x.segment(j * r, r);
                             J.middleCols(j * r, r).setIdentity();
                             if (j == 0) {
                               v -= gain * x0;
                             } else {
                               v -= gain * x.segment((j - 1) * r, r);
                               J.middleCols((j - 1) * r, r) = -MatrixXd::Identity(r, r);
                             }
                             J *= gain;
                           },
                           1.0, "motion@" + std::to_string(j)});
    const Controller& c = *spec.controllers[static_cast<size_t>(j)];
    for (const auto& cost : c.costs) {
      if (needs_previous_state(cost.feature)) continue;
      p.residuals.push_back(waypoint_term(map, j, false, cost.feature, 1.0, cost.label, cost.weight));
    }
    for (const ConstraintSpec* g : all_of(c)) add_waypoint_constraint(p, map, j, false, *g, scene);
    if (j + 1 < m) {
      for (const ConstraintSpec* g : immediate_of(*spec.controllers[static_cast<size_t>(j + 1)]))
        add_waypoint_constraint(p, map, j, true, *g, scene);
    } else {
      for (const ConstraintSpec* g : spec.final_constraints) add_waypoint_constraint(p, map, j, true, *g, scene);
    }
  }
  detail::joint_bounds(scene, p);

  std::vector<VectorXd> seeds;
  auto tile = [&](const VectorXd& q) {
    VectorXd s(p.dim);
    for (int j = 0; j < m; ++j) s.segment(j * r, r) = q;
    return VectorXd(s.cwiseMax(*p.lower).cwiseMin(*p.upper));
  };
  seeds.push_back(tile(x0));
  if (settings.multi_start)
    for (const auto& alt : alternative_seeds(scene, start.config)) seeds.push_back(tile(alt(scene.robot_dofs())));

  SequenceResult best;
  best.max_violation = std::numeric_limits<double>::infinity();
  for (const auto& seed : seeds) {
    const auto sol = nlp::solve(p, seed, settings.control.solver);
    if (sol.max_violation < best.max_violation) {
      best.max_violation = sol.max_violation;
      best.cost = sol.objective;
      map->update(sol.x_star);
      best.waypoints.assign(1, start.config);
      for (int j = 0; j < m; ++j) best.waypoints.push_back(map->pre(j).config);
    }
    if (sol.max_violation <= settings.control.eps_feas) break;
  }
  best.feasible = best.max_violation <= settings.control.eps_feas;
  if (!best.feasible) best.reason = "waypoint constraints violated by " + std::to_string(best.max_violation);
  return best;
}

}  // namespace

SequenceResult sequence_feasible(const Scene& scene, const ControllerChain& chain, int from,
                                 const KinematicState& current, const SequenceSettings& settings) {
  SequenceResult res;
  if (from < 0 || from > chain.size()) {
    res.reason = "entry index out of range";
    return res;
  }
  if (from == chain.size()) {
    // Only the goal remains.
    res.waypoints.assign(1, current.config);
    res.feasible = goal_satisfied(scene, chain.goal, current.config, current.attachments, settings.control.eps_feas);
    if (!res.feasible) res.reason = "goal not satisfied";
    return res;
  }
  auto holdings = phase_holdings(chain, from, current.attachments);
  if (!holdings) {
    res.reason = "logic preconditions disagree with the gripper phases";
    return res;
  }
  WaypointSpec spec;
  for (int k = from; k < chain.size(); ++k) spec.controllers.push_back(&chain.controllers[static_cast<size_t>(k)]);
  for (const auto& g : chain.goal) spec.final_constraints.push_back(&g);
  spec.holdings = std::move(*holdings);
  return solve_waypoints(scene, spec, current, settings);
}

SwitchResult switching_configuration(const Scene& scene, const Controller& first, const Controller& second,
                                     const KinematicState& seed, const SequenceSettings& settings) {
  SwitchResult out;
  WaypointSpec spec;
  spec.controllers.push_back(&first);
  spec.final_constraints = immediate_of(second);
  const Attachments h1 = attachments_for_logic(first.logic, seed.attachments);
  Attachments h2 = apply_signal(first.signal, h1);
  if (!logic_satisfied(second.logic, h2)) return out;
  spec.holdings = {h1, std::move(h2)};
  KinematicState start = seed;
  start.attachments = h1;
  const auto res = solve_waypoints(scene, spec, start, settings);
  out.feasible = res.feasible;
  out.max_violation = res.max_violation;
  if (res.waypoints.size() > 1) out.config = res.waypoints[1];
  return out;
}

PropagationReport propagate_implicit(const Scene& scene, ControllerChain& chain, const KinematicState& initial,
                                     const ControlSettings& settings, double eps_margin) {
  const int n = chain.size();
  PropagationReport rep;
  rep.anchors.resize(static_cast<size_t>(n));
  rep.anchor_feasible.assign(static_cast<size_t>(n), false);
  rep.added.resize(static_cast<size_t>(n));
  for (int i = n - 1; i >= 0; --i) {
    Controller& c = chain.controllers[static_cast<size_t>(i)];
    const auto term = solve_terminal(scene, c, initial, settings, false);
    rep.anchors[static_cast<size_t>(i)] = term.config;
    rep.anchor_feasible[static_cast<size_t>(i)] = term.feasible;
    if (!term.feasible) {
      chain.diagnostics.push_back("terminal solve of '" + c.name + "' infeasible (violation " +
                                  std::to_string(term.max_violation) + "); no implicit constraints added");
      continue;
    }
    std::vector<const ConstraintSpec*> successor;
    std::string from;
    if (i + 1 < n) {
      successor = immediate_of(chain.controllers[static_cast<size_t>(i + 1)]);
      from = chain.controllers[static_cast<size_t>(i + 1)].name;
    } else {
      for (const auto& g : chain.goal) successor.push_back(&g);
      from = "goal";
    }
    const Attachments h = attachments_for_logic(c.logic, initial.attachments);
    const auto world = forward_kinematics(scene, term.config, h);
    std::vector<ConstraintSpec> additions;
    for (const ConstraintSpec* g : successor) {
      const auto v = evaluate(*g, EvalContext{scene, term.config, h, nullptr, nullptr, &world}).value;
      if (violation(g->comparator, v) <= eps_margin) continue;
      ConstraintSpec implicit = *g;
      implicit.transient_epsilon.reset();
      implicit.label = constraint_id(*g, scene);
      implicit.provenance = from;
      const bool present = std::any_of(c.implicit_constraints.begin(), c.implicit_constraints.end(),
                                       [&](const ConstraintSpec& e) {
                                         return e.label == implicit.label && e.provenance == implicit.provenance;
                                       });
      if (!present) additions.push_back(std::move(implicit));
    }
    for (auto& a : additions) {
      rep.added[static_cast<size_t>(i)].push_back(a.label);
      c.implicit_constraints.push_back(std::move(a));
    }
  }
  return rep;
}

}  // namespace fc3
