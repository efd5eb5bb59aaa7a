#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fc3/scenario.hpp"

namespace fc3 {

struct WorldEvent {
  double t = 0.0;
  std::string kind;  // step | fire | fire_failed | effect | drag
  std::string detail;
};

/// Kinematic simulation: robot joints track a reference under velocity and
/// joint limits, held objects follow their holder.
class World {
 public:
  World(const Scene& scene, KinematicState initial, double tau, double velocity_limit);

  const Scene& scene() const { return *scene_; }
  const KinematicState& state() const { return state_; }
  double time() const { return static_cast<double>(ticks_) * tau_; }
  long ticks() const { return ticks_; }
  double tau() const { return tau_; }

  /// Moves toward `reference` for one tick.
  void step(const VectorXd& reference);
  /// One tick without motion.
  void hold();
  /// Applies the controller's signal (no time passes). Throws KinematicsError on a missed grasp.
  void fire(const Controller& c, const GraspTolerance& tol = {});
  void apply(const EffectSpec& effect);
  /// Places a free object; a held object is released first.
  void place(const std::string& object, const Pose2d& pose);
  void reset(KinematicState state);
  /// Jumps the clock forward without motion.
  void advance_to(long ticks);

  const std::vector<WorldEvent>& log() const { return log_; }
  void note(std::string kind, std::string detail);

 private:
  const Scene* scene_;
  KinematicState state_;
  double tau_;
  double velocity_limit_;
  long ticks_ = 0;
  std::vector<WorldEvent> log_;
};

/// Fires interference events from their triggers, each at most once.
class PerturbationScript {
 public:
  PerturbationScript() = default;
  explicit PerturbationScript(const InterferenceSpec& spec);

  /// Reports a controller entry; only the first entry per name starts its delay.
  void entered(const std::string& controller, double t);
  /// Effects whose time or entry trigger is due at time `t`.
  std::vector<EffectSpec> due(double t);
  /// Effects triggered by a signal about to fire.
  std::vector<EffectSpec> on_signal(Signal::Kind kind, const std::string& object);
  /// Effects of manual events (injection).
  std::vector<EffectSpec> manual();
  /// A time or entry trigger may still fire in the future.
  bool pending_timed() const;

 private:
  std::vector<EventSpec> events_;
  std::vector<bool> done_;
  std::vector<std::pair<std::string, double>> first_entry_;
  std::optional<double> entry_time(const std::string& controller) const;
};

}  // namespace fc3
