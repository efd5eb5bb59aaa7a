#include "fc3/features.hpp"

#include <cmath>
#include <sstream>

namespace fc3 {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

int limited_joint_count(const Scene& scene) {
  int n = 0;
  for (const auto& f : scene.frames())
    if (f.joint == JointType::revolute && f.limits) ++n;
  return n;
}

const VectorXd& require(const VectorXd* v, const char* what) {
  if (!v) throw FeatureError(std::string("feature needs the previous ") + what);
  return *v;
}

}  // namespace

int feature_dim(const FeatureKind& kind, const Scene& scene) {
  return std::visit(overloaded{
                        [](const feature::PositionDiff&) { return 2; },
                        [](const feature::Distance&) { return 1; },
                        [](const feature::Alignment&) { return 1; },
                        [&](const feature::JointLimitsFeature&) { return 2 * limited_joint_count(scene); },
                        [&](const feature::ControlCost&) { return scene.dim(); },
                        [](const feature::PoseEquality&) { return 3; },
                        [](const feature::ZeroVelocity&) { return 3; },
                    },
                    kind);
}

bool needs_previous_state(const FeatureKind& kind) {
  return std::holds_alternative<feature::ControlCost>(kind) || std::holds_alternative<feature::ZeroVelocity>(kind);
}

FeatureValue evaluate(const FeatureKind& kind, const EvalContext& ctx) {
  const Scene& scene = ctx.scene;
  std::vector<Pose2d> local_world;
  const std::vector<Pose2d>* world = ctx.world;
  auto poses = [&]() -> const std::vector<Pose2d>& {
    if (!world) {
      local_world = forward_kinematics(scene, ctx.config, ctx.attachments);
      world = &local_world;
    }
    return *world;
  };
  auto pose_of = [&](int f) -> const Pose2d& { return poses()[static_cast<size_t>(f)]; };
  auto jac = [&](int f, Query q) { return jacobian(scene, poses(), f, q, ctx.attachments); };

  return std::visit(
      overloaded{
          [&](const feature::PositionDiff& k) -> FeatureValue {
            VectorXd v = pose_of(k.a).t - pose_of(k.b).t - k.target;
            return {v, jac(k.a, Query::position) - jac(k.b, Query::position)};
          },
          [&](const feature::Distance& k) -> FeatureValue {
            const Eigen::Vector2d d = pose_of(k.a).t - pose_of(k.b).t;
            const double n = d.norm();
            const Eigen::Vector2d u = n > 1e-12 ? Eigen::Vector2d(d / n) : Eigen::Vector2d(1.0, 0.0);
            VectorXd v(1);
            v(0) = n - scene.frame(k.a).shape.radius() - scene.frame(k.b).shape.radius() - k.margin;
            MatrixXd J = u.transpose() * (jac(k.a, Query::position) - jac(k.b, Query::position));
            return {v, J};
          },
          [&](const feature::Alignment& k) -> FeatureValue {
            VectorXd v(1);
            v(0) = wrap_angle(pose_of(k.a).theta - pose_of(k.b).theta - k.target);
            return {v, jac(k.a, Query::orientation) - jac(k.b, Query::orientation)};
          },
          [&](const feature::JointLimitsFeature&) -> FeatureValue {
            const int n = limited_joint_count(scene);
            FeatureValue out{VectorXd::Zero(2 * n), MatrixXd::Zero(2 * n, scene.dim())};
            int row = 0;
            for (int f = 0; f < scene.frame_count(); ++f) {
              const Frame& fr = scene.frame(f);
              if (fr.joint != JointType::revolute || !fr.limits) continue;
              const int i = scene.dof_offset(f);
              out.value(row) = ctx.config(i) - fr.limits->hi;
              out.jacobian(row, i) = 1.0;
              out.value(row + 1) = fr.limits->lo - ctx.config(i);
              out.jacobian(row + 1, i) = -1.0;
              row += 2;
            }
            return out;
          },
          [&](const feature::ControlCost& k) -> FeatureValue {
            const VectorXd& x = require(ctx.prev_config, "configuration");
            const VectorXd& xd = require(ctx.prev_velocity, "velocity");
            const double s = k.alpha / k.tau;
            return {s * (ctx.config - (x + k.tau * xd)), s * MatrixXd::Identity(scene.dim(), scene.dim())};
          },
          [&](const feature::PoseEquality& k) -> FeatureValue {
            VectorXd v = pose_difference(pose_of(k.a), pose_of(k.b));
            return {v, jac(k.a, Query::pose) - jac(k.b, Query::pose)};
          },
          [&](const feature::ZeroVelocity& k) -> FeatureValue {
            const VectorXd& x = require(ctx.prev_config, "configuration");
            const auto prev = forward_kinematics(scene, x, ctx.attachments);
            VectorXd v = pose_difference(pose_of(k.frame), prev[static_cast<size_t>(k.frame)]) / k.tau;
            return {v, jac(k.frame, Query::pose) / k.tau};
          },
      },
      kind);
}

std::string describe(const FeatureKind& kind, const Scene& scene) {
  auto name = [&](int f) { return scene.frame(f).name; };
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const feature::PositionDiff& k) {
                   os << "position_diff(" << name(k.a) << "," << name(k.b) << ")";
                 },
                 [&](const feature::Distance& k) { os << "distance(" << name(k.a) << "," << name(k.b) << ")"; },
                 [&](const feature::Alignment& k) { os << "alignment(" << name(k.a) << "," << name(k.b) << ")"; },
                 [&](const feature::JointLimitsFeature&) { os << "joint_limits"; },
                 [&](const feature::ControlCost&) { os << "control_cost"; },
                 [&](const feature::PoseEquality& k) {
                   os << "pose_equality(" << name(k.a) << "," << name(k.b) << ")";
                 },
                 [&](const feature::ZeroVelocity& k) { os << "zero_velocity(" << name(k.frame) << ")"; },
             },
             kind);
  return os.str();
}

FeatureValue evaluate(const ConstraintSpec& c, const EvalContext& ctx) {
  FeatureValue fv = evaluate(c.feature, ctx);
  if (c.scale != 1.0) {
    fv.value *= c.scale;
    fv.jacobian *= c.scale;
  }
  return fv;
}

double violation(Comparator comparator, const VectorXd& value) {
  if (value.size() == 0) return 0.0;
  if (comparator == Comparator::eq) return value.cwiseAbs().maxCoeff();
  return std::max(0.0, value.maxCoeff());
}

TransientTracker::TransientTracker(VectorXd initial_error, double epsilon, double tau)
    : initial_error_(std::move(initial_error)), budget_(epsilon * tau) {
  if (!(budget_ > 0.0)) throw FeatureError("transient budget tau * epsilon must be positive");
}

VectorXd transient_target(const TransientTracker& tracker, const VectorXd& current_error, Comparator comparator) {
  VectorXd err = current_error;
  if (comparator == Comparator::ineq) err = err.cwiseMax(0.0);
  if (tracker.degenerate()) return VectorXd::Zero(err.size());
  const double n = err.norm();
  if (n <= tracker.budget()) return VectorXd::Zero(err.size());
  return err * ((n - tracker.budget()) / n);
}

VectorXd clip_transient(const TransientTracker& tracker, const VectorXd& current_error, const VectorXd& value,
                        Comparator comparator) {
  return value - transient_target(tracker, current_error, comparator);
}

}  // namespace fc3
