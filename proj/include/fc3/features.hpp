#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fc3/kinematics.hpp"

namespace fc3 {

namespace feature {

/// pos(a) - pos(b) - target (world frame), meters.
struct PositionDiff {
  int a;
  int b;
  Eigen::Vector2d target = Eigen::Vector2d::Zero();
};

/// |pos(a) - pos(b)| - r_a - r_b - margin, meters. Positive when separated.
struct Distance {
  int a;
  int b;
  double margin = 0.0;
};

/// wrap(theta_a - theta_b - target), radians.
struct Alignment {
  int a;
  int b;
  double target = 0.0;
};

/// Stacked [q - hi, lo - q] over every limited revolute joint.
struct JointLimitsFeature {};

/// (alpha / tau) * (x' - (x + tau * xdot)); needs the previous state.
struct ControlCost {
  double alpha = 1.0;
  double tau = 0.02;
};

/// pose(a) - pose(b) as (dx, dy, wrapped dtheta).
struct PoseEquality {
  int a;
  int b;
};

/// (pose(x') - pose(x)) / tau of one frame; needs the previous configuration.
struct ZeroVelocity {
  int frame;
  double tau = 0.02;
};

}  // namespace feature

using FeatureKind = std::variant<feature::PositionDiff, feature::Distance, feature::Alignment,
                                 feature::JointLimitsFeature, feature::ControlCost, feature::PoseEquality,
                                 feature::ZeroVelocity>;

/// Evaluation point of a feature. Only `config` is a decision variable;
/// the previous state is data.
struct EvalContext {
  const Scene& scene;
  const VectorXd& config;
  std::span<const Attachment> attachments = {};
  const VectorXd* prev_config = nullptr;
  const VectorXd* prev_velocity = nullptr;
  // Optional cache of forward_kinematics(scene, config, attachments).
  const std::vector<Pose2d>* world = nullptr;
};

struct FeatureValue {
  VectorXd value;
  MatrixXd jacobian;  // rows = value size, cols = scene.dim()
};

class FeatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int feature_dim(const FeatureKind& kind, const Scene& scene);
bool needs_previous_state(const FeatureKind& kind);
FeatureValue evaluate(const FeatureKind& kind, const EvalContext& ctx);
std::string describe(const FeatureKind& kind, const Scene& scene);

enum class Comparator { eq, ineq };

struct ConstraintSpec {
  FeatureKind feature;
  Comparator comparator = Comparator::eq;
  std::optional<double> transient_epsilon;  // absent: immediate
  double scale = 1.0;                       // applied to value and Jacobian
  std::string label;
  std::string provenance;  // non-empty for implicit constraints

  bool immediate() const { return !transient_epsilon.has_value(); }
};

struct CostTerm {
  FeatureKind feature;
  double weight = 1.0;
  std::string label;
};

/// Scaled value and Jacobian of a constraint.
FeatureValue evaluate(const ConstraintSpec& c, const EvalContext& ctx);

/// Largest violation: |h| for equalities, max(0, g) for inequalities.
double violation(Comparator comparator, const VectorXd& value);

/// Per-step error budget of a transient constraint, captured on controller entry.
class TransientTracker {
 public:
  TransientTracker(VectorXd initial_error, double epsilon, double tau);

  const VectorXd& initial_error() const { return initial_error_; }
  double budget() const { return budget_; }
  /// Initial error is zero: the constraint behaves as immediate.
  bool degenerate() const { return initial_error_.norm() == 0.0; }

 private:
  VectorXd initial_error_;
  double budget_;
};

/// Target value for this control step. The shifted feature phi - target has
/// its zero set where the error has shrunk by at most one budget step
/// relative to `current_error`; inequality errors only count their positive part.
VectorXd transient_target(const TransientTracker& tracker, const VectorXd& current_error, Comparator comparator);

/// Shifted feature value: `value - transient_target(tracker, current_error)`.
VectorXd clip_transient(const TransientTracker& tracker, const VectorXd& current_error, const VectorXd& value,
                        Comparator comparator);

}  // namespace fc3
