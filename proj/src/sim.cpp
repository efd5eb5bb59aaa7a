#include "fc3/sim.hpp"

#include <algorithm>
#include <cmath>

namespace fc3 {

World::World(const Scene& scene, KinematicState initial, double tau, double velocity_limit)
    : scene_(&scene), state_(std::move(initial)), tau_(tau), velocity_limit_(velocity_limit) {}

void World::step(const VectorXd& reference) {
  const VectorXd before = state_.config;
  // Uniform scaling keeps the commanded joint-space direction.
  const double max_delta = velocity_limit_ * tau_;
  double largest = 0.0;
  for (int i : scene_->robot_dofs()) largest = std::max(largest, std::abs(reference(i) - state_.config(i)));
  const double scale = largest > max_delta ? max_delta / largest : 1.0;
  for (int i : scene_->robot_dofs()) state_.config(i) += scale * (reference(i) - state_.config(i));
  for (int f = 0; f < scene_->frame_count(); ++f) {
    const auto& fr = scene_->frame(f);
    if (fr.joint != JointType::revolute || !fr.limits) continue;
    const int i = scene_->dof_offset(f);
    state_.config(i) = std::clamp(state_.config(i), fr.limits->lo, fr.limits->hi);
  }
  sync_attached(*scene_, state_);
  state_.velocity = (state_.config - before) / tau_;
  ++ticks_;
}

void World::hold() {
  state_.velocity.setZero();
  ++ticks_;
}

void World::fire(const Controller& c, const GraspTolerance& tol) {
  state_ = fire_signal(*scene_, c, state_, tol);
  note("fire", c.name + " " + to_string(c.signal.kind));
}

void World::apply(const EffectSpec& effect) {
  apply_effect(*scene_, state_, effect);
  note("effect", effect.object);
}

void World::place(const std::string& object, const Pose2d& pose) {
  EffectSpec e;
  e.kind = EffectSpec::Kind::teleport;
  e.object = object;
  e.pose = pose;
  e.keep_theta = false;
  apply_effect(*scene_, state_, e);
  note("drag", object);
}

void World::reset(KinematicState state) {
  state_ = std::move(state);
  ticks_ = 0;
  log_.clear();
}

void World::advance_to(long ticks) {
  state_.velocity.setZero();
  ticks_ = std::max(ticks_, ticks);
}

void World::note(std::string kind, std::string detail) { log_.push_back({time(), std::move(kind), std::move(detail)}); }

PerturbationScript::PerturbationScript(const InterferenceSpec& spec)
    : events_(spec.events), done_(spec.events.size(), false) {}

void PerturbationScript::entered(const std::string& controller, double t) {
  if (!entry_time(controller)) first_entry_.emplace_back(controller, t);
}

std::optional<double> PerturbationScript::entry_time(const std::string& controller) const {
  for (const auto& [name, t] : first_entry_)
    if (name == controller) return t;
  return std::nullopt;
}

std::vector<EffectSpec> PerturbationScript::due(double t) {
  std::vector<EffectSpec> out;
  constexpr double slack = 1e-9;
  for (std::size_t i = 0; i < events_.size(); ++i) {
    if (done_[i]) continue;
    const auto& tr = events_[i].trigger;
    bool fire = false;
    if (tr.kind == TriggerSpec::Kind::at_time) fire = t + slack >= tr.time;
    if (tr.kind == TriggerSpec::Kind::controller_entered) {
      const auto entry = entry_time(tr.controller);
      fire = entry && t + slack >= *entry + tr.delay;
    }
    if (!fire) continue;
    done_[i] = true;
    out.insert(out.end(), events_[i].effects.begin(), events_[i].effects.end());
  }
  return out;
}

std::vector<EffectSpec> PerturbationScript::on_signal(Signal::Kind kind, const std::string& object) {
  std::vector<EffectSpec> out;
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const auto& tr = events_[i].trigger;
    if (done_[i] || tr.kind != TriggerSpec::Kind::signal || tr.signal != kind) continue;
    if (!tr.object.empty() && tr.object != object) continue;
    done_[i] = true;
    out.insert(out.end(), events_[i].effects.begin(), events_[i].effects.end());
  }
  return out;
}

std::vector<EffectSpec> PerturbationScript::manual() {
  std::vector<EffectSpec> out;
  for (std::size_t i = 0; i < events_.size(); ++i) {
    if (done_[i] || events_[i].trigger.kind != TriggerSpec::Kind::manual) continue;
    done_[i] = true;
    out.insert(out.end(), events_[i].effects.begin(), events_[i].effects.end());
  }
  return out;
}

bool PerturbationScript::pending_timed() const {
  for (std::size_t i = 0; i < events_.size(); ++i) {
    if (done_[i]) continue;
    const auto& tr = events_[i].trigger;
    if (tr.kind == TriggerSpec::Kind::at_time) return true;
    if (tr.kind == TriggerSpec::Kind::controller_entered && entry_time(tr.controller)) return true;
  }
  return false;
}

}  // namespace fc3
