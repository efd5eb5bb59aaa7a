#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fc3/chain.hpp"
#include "fc3/symbolic.hpp"

namespace fc3 {

/// Carries every problem found while loading or instantiating a scenario.
class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

// Templates name frames as strings; "?x" tokens are replaced by action arguments.

struct FeatureTemplate {
  std::string kind;  // position_diff | distance | alignment | joint_limits | pose_equality
  std::string a, b;
  Eigen::Vector2d target = Eigen::Vector2d::Zero();
  double margin = 0.0;
  double angle = 0.0;
};

struct ForEach {
  std::string var;                   // "?o"
  std::vector<std::string> exclude;  // may contain action parameters
};

struct ConstraintTemplate {
  FeatureTemplate feature;
  Comparator comparator = Comparator::eq;
  std::optional<double> epsilon;
  double scale = 1.0;
  std::string label;
  std::optional<ForEach> for_each;  // one constraint per domain object
};

struct CostTemplate {
  FeatureTemplate feature;
  double weight = 1.0;
  std::string label;
};

struct LogicTemplate {
  std::string holder;
  std::string object;  // empty: holder is free
};

struct SignalTemplate {
  Signal::Kind kind = Signal::Kind::none;
  std::string holder;
  std::string object;
};

struct ControllerTemplate {
  std::vector<CostTemplate> costs;
  std::vector<ConstraintTemplate> constraints;
  SignalTemplate signal;
  std::vector<LogicTemplate> logic;
};

struct ActionTemplate {
  symbolic::ActionSchema schema;
  std::vector<std::string> controllers;  // keys into ScenarioSpec::controllers, executed in order
};

struct ArmSpec {
  std::string name;
  Pose2d base;
  std::vector<double> links;
  JointLimits limits{-2.6, 2.6};
  std::vector<double> initial;  // empty: all zero
};

struct ObjectSpec {
  std::string name;
  Shape shape;
  Pose2d pose;
};

struct FrameSpec {
  std::string name;
  std::string parent = "world";
  Pose2d offset;
  Shape shape;
};

struct EffectSpec {
  enum class Kind { teleport, shift, stack_on };
  Kind kind = Kind::teleport;
  std::string object;
  Pose2d pose;                                      // teleport
  bool keep_theta = true;                           // teleport without an explicit angle
  Eigen::Vector2d delta = Eigen::Vector2d::Zero();  // shift
  std::string onto;                                 // stack_on
};

struct TriggerSpec {
  enum class Kind { at_time, controller_entered, signal, manual };
  Kind kind = Kind::manual;
  double time = 0.0;        // at_time
  std::string controller;   // controller_entered
  double delay = 0.0;       // controller_entered: seconds after first entry
  Signal::Kind signal = Signal::Kind::grasp;  // signal
  std::string object;       // signal: target object (empty: any)
};

struct EventSpec {
  TriggerSpec trigger;
  std::vector<EffectSpec> effects;
};

struct InterferenceSpec {
  std::string id;
  std::string description;
  std::vector<EffectSpec> initial;  // applied before the run starts
  std::vector<EventSpec> events;
};

struct ScenarioParams {
  int explore = 1;  // j
  int trim = 1;     // r
  double tau = 0.02;
  int n_check = 10;
  double eps_feas = 1e-3;
  double timeout = 120.0;
  double jitter = 0.02;          // uniform object placement noise per trial, m
  double recheck_motion = 0.05;  // object motion that invalidates a feasibility verdict, m
  double velocity_limit = 1.0;   // rad/s per joint
};

struct ScenarioSpec {
  std::string name;
  std::string description;
  std::vector<ArmSpec> arms;
  std::vector<ObjectSpec> objects;
  std::vector<FrameSpec> frames;
  std::vector<std::string> domain_objects;
  std::vector<ActionTemplate> actions;
  std::map<std::string, ControllerTemplate> controllers;
  std::vector<std::string> init;
  std::vector<std::string> goal_atoms;
  std::vector<ConstraintTemplate> goal;
  ScenarioParams params;
  std::vector<InterferenceSpec> interferences;
};

/// A scenario with its scene and ground domain built.
struct Scenario {
  ScenarioSpec spec;
  Scene scene;
  KinematicState nominal;  // initial state without jitter or interference
  symbolic::Domain domain;
  symbolic::LogicState init;
  symbolic::LogicState goal_atoms;
  std::vector<ConstraintSpec> goal;

  /// Controllers implementing a ground action, in execution order.
  std::vector<Controller> controllers_for(const symbolic::GroundAction& action) const;
  const InterferenceSpec& interference(const std::string& id) const;
  std::vector<std::string> interference_ids() const;
  /// Nominal state with the interference's initial effects, then seeded jitter on object positions.
  KinematicState initial_state(const std::string& interference, std::uint64_t seed) const;
  int frame(const std::string& name) const;
};

Scenario instantiate(ScenarioSpec spec);

struct Library {
  symbolic::ActionTree tree;  // trimmed
  std::vector<ControllerChain> chains;
  std::vector<PropagationReport> propagation;  // one per chain
};

/// Action tree from the scenario's goal and initial logic state, trimmed, mapped to
/// controller chains and back-propagated with `anchor` as the terminal-solve seed.
Library build_library(const Scenario& scenario, const KinematicState& anchor, const ControlSettings& settings = {});

ControlSettings control_settings(const ScenarioParams& params);

/// Applies an effect; moving an attached object releases it first.
void apply_effect(const Scene& scene, KinematicState& state, const EffectSpec& effect);

ScenarioSpec parse_scenario(const std::string& json_text);
std::string dump_scenario(const ScenarioSpec& spec);
Scenario load_scenario(const std::string& path);

/// Path of a bundled scenario file.
std::string bundled_scenario_path(const std::string& name);
/// tower | stick | handover
Scenario build_scenario(const std::string& name);

}  // namespace fc3
