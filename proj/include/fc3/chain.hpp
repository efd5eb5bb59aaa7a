#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fc3/controller.hpp"

namespace fc3 {

struct ControllerChain {
  std::vector<Controller> controllers;
  std::vector<ConstraintSpec> goal;
  std::vector<std::string> source;  // ground symbolic actions, in execution order
  std::vector<std::string> diagnostics;

  int size() const { return static_cast<int>(controllers.size()); }
  std::string describe() const;
};

/// Holdings the attachments pass through after applying `signal` (zero offset for grasps).
Attachments apply_signal(const Signal& signal, std::span<const Attachment> holdings);

/// Expected holdings while each controller from `from` on runs, followed by the
/// holdings after the last signal. Empty when psi' disagrees with the phase.
std::optional<std::vector<Attachments>> phase_holdings(const ControllerChain& chain, int from,
                                                       std::span<const Attachment> current);

struct PropagationReport {
  std::vector<VectorXd> anchors;  // terminal configuration per controller
  std::vector<bool> anchor_feasible;
  std::vector<std::vector<std::string>> added;  // constraint ids added per controller
};

/// Back-propagates violated successor constraints (the goal for the last
/// controller) into each predecessor, last to first. Terminal solves use the
/// controller's own constraints only, so a second pass adds nothing.
PropagationReport propagate_implicit(const Scene& scene, ControllerChain& chain, const KinematicState& initial,
                                     const ControlSettings& settings = {}, double eps_margin = 1e-3);

struct SequenceResult {
  bool feasible = false;
  std::vector<VectorXd> waypoints;  // x_0 (current) then one per remaining controller
  double max_violation = 0.0;
  double cost = 0.0;
  std::string reason;
};

struct SequenceSettings {
  ControlSettings control{};
  double motion_weight = 1e-2;
  bool multi_start = true;
};

/// Waypoint NLP over the remaining controllers `from..N-1` and the goal.
SequenceResult sequence_feasible(const Scene& scene, const ControllerChain& chain, int from,
                                 const KinematicState& current, const SequenceSettings& settings = {});

struct SwitchResult {
  VectorXd config;
  bool feasible = false;
  double max_violation = 0.0;
};

/// A configuration where F_T(first) and F_I(second) hold together.
SwitchResult switching_configuration(const Scene& scene, const Controller& first, const Controller& second,
                                     const KinematicState& seed, const SequenceSettings& settings = {});

/// F_I(G).
bool goal_satisfied(const Scene& scene, std::span<const ConstraintSpec> goal, const VectorXd& config,
                    std::span<const Attachment> attachments, double eps_feas = 1e-3);

}  // namespace fc3
