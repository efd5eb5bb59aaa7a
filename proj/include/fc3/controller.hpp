#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fc3/features.hpp"
#include "fc3/nlp.hpp"

namespace fc3 {

/// holding(holder, object), or gripper_free(holder) when object < 0.
struct LogicAtom {
  int holder = -1;
  int object = -1;

  bool free() const { return object < 0; }
  bool operator==(const LogicAtom&) const = default;
};

struct Signal {
  enum class Kind { none, grasp, place };
  Kind kind = Kind::none;
  int holder = -1;
  int object = -1;  // grasp target; ignored by place
};

const char* to_string(Signal::Kind kind);

/// Omega = (phi, g, eps, psi) plus the logic precondition psi'.
struct Controller {
  std::string name;
  std::vector<CostTerm> costs;
  std::vector<ConstraintSpec> constraints;
  std::vector<ConstraintSpec> implicit_constraints;
  Signal signal;
  std::vector<LogicAtom> logic;
};

struct ControlSettings {
  double tau = 0.02;
  double alpha = 1.0;    // control cost weight
  double damping = 1.0;  // extra (damping / tau)(x' - x) term, pins the null space
  double eps_feas = 1e-3;
  double terminal_regularization = 1e-2;
  nlp::Options<double> solver{};
};

class ControlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeasibilityReport {
  bool holds = false;
  double max_violation = 0.0;
  std::vector<std::string> violated;
  bool logic_ok = true;
};

std::string constraint_id(const ConstraintSpec& c, const Scene& scene);

bool logic_satisfied(std::span<const LogicAtom> logic, std::span<const Attachment> attachments);

/// Attachments implied by `logic`, starting from `current`: free holders lose their
/// object, missing holdings are added at zero offset.
Attachments attachments_for_logic(std::span<const LogicAtom> logic, std::span<const Attachment> current);

/// F_I: immediate and implicit constraints plus psi'.
FeasibilityReport immediate_feasible(const Scene& scene, const Controller& c, const VectorXd& config,
                                     std::span<const Attachment> attachments, double eps_feas = 1e-3);

/// F_T: every constraint, transients unclipped. Costs and psi' are ignored.
FeasibilityReport final_feasible(const Scene& scene, const Controller& c, const VectorXd& config,
                                 std::span<const Attachment> attachments, double eps_feas = 1e-3);

/// Per-constraint trackers, captured when a controller is entered. Entries for
/// immediate constraints are empty.
using TransientTrackers = std::vector<std::optional<TransientTracker>>;

TransientTrackers enter_controller(const Scene& scene, const Controller& c, const KinematicState& state, double tau);

/// The 1-step NLP over robot DOFs. Exposed for inspection and tests.
nlp::Problem<double> step_problem(const Scene& scene, const Controller& c, const TransientTrackers& trackers,
                                  const KinematicState& state, const ControlSettings& settings);

/// Next reference configuration. Throws ControlError when an immediate
/// constraint is already violated or the solve is infeasible.
VectorXd step(const Scene& scene, const Controller& c, const TransientTrackers& trackers,
              const KinematicState& state, const ControlSettings& settings = {});

struct TerminalResult {
  VectorXd config;
  bool feasible = false;
  double max_violation = 0.0;
};

/// Far-future configuration where F_T holds, with held objects (per psi')
/// virtually attached. Objects not held stay where they are in `seed`.
TerminalResult solve_terminal(const Scene& scene, const Controller& c, const KinematicState& seed,
                              const ControlSettings& settings = {}, bool include_implicit = true);

/// Applies psi. Grasping an object held elsewhere transfers it. Throws
/// KinematicsError when the grasp is out of tolerance.
KinematicState fire_signal(const Scene& scene, const Controller& c, const KinematicState& state,
                           const GraspTolerance& tol = {});

/// Alternative seeds for multi-start solves: elbow-flipped and zero robot joints.
std::vector<VectorXd> alternative_seeds(const Scene& scene, const VectorXd& config);

namespace detail {

/// Maps a reduced vector of robot joints into a full configuration and caches FK.
class RobotConfigMap {
 public:
  RobotConfigMap(const Scene& scene, VectorXd base, Attachments attachments);

  void update(const VectorXd& x);
  const VectorXd& config() const { return config_; }
  const std::vector<Pose2d>& world() const { return world_; }
  const Attachments& attachments() const { return attachments_; }
  const Scene& scene() const { return *scene_; }
  const std::vector<int>& dofs() const { return scene_->robot_dofs(); }

  VectorXd reduce(const VectorXd& config) const;

 private:
  const Scene* scene_;
  VectorXd config_;
  Attachments attachments_;
  std::vector<Pose2d> world_;
  VectorXd last_;
  bool valid_ = false;
};

/// Robot joint limits as solver bounds (infinite where unlimited).
void joint_bounds(const Scene& scene, nlp::Problem<double>& p);

}  // namespace detail

}  // namespace fc3
