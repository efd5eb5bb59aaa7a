#include "fc3/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace fc3 {

double Shape::radius() const {
  switch (kind) {
    case Kind::disk:
      return a;
    case Kind::box:
      return 0.5 * std::max(a, b);
    case Kind::hook:
    case Kind::none:
      return 0.0;
  }
  return 0.0;
}

Scene::Scene() {
  Frame world;
  world.name = "world";
  frames_.push_back(world);
  by_name_.emplace("world", 0);
  dof_offset_.push_back(-1);
}

int Scene::add_frame(Frame frame) {
  if (frame.name.empty()) throw KinematicsError("", "frame name must not be empty");
  if (by_name_.count(frame.name)) throw KinematicsError(frame.name, "duplicate frame name");
  if (frame.parent < 0) frame.parent = 0;
  if (frame.parent >= frame_count()) throw KinematicsError(frame.name, "unknown parent frame");
  if (frame.limits) {
    if (frame.joint != JointType::revolute)
      throw KinematicsError(frame.name, "joint limits are only allowed on revolute joints");
    if (!(frame.limits->lo < frame.limits->hi))
      throw KinematicsError(frame.name, "joint limits require lo < hi");
  }
  const int index = frame_count();
  switch (frame.joint) {
    case JointType::fixed:
      dof_offset_.push_back(-1);
      break;
    case JointType::revolute:
      dof_offset_.push_back(dim_);
      robot_dofs_.push_back(dim_);
      dim_ += 1;
      break;
    case JointType::free_planar:
      dof_offset_.push_back(dim_);
      object_frames_.push_back(index);
      dim_ += 3;
      break;
  }
  by_name_.emplace(frame.name, index);
  frames_.push_back(std::move(frame));
  return index;
}

int Scene::frame_index(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw KinematicsError(name, "unknown frame");
  return it->second;
}

int Scene::dof_count(int frame) const {
  switch (frames_.at(static_cast<size_t>(frame)).joint) {
    case JointType::fixed:
      return 0;
    case JointType::revolute:
      return 1;
    case JointType::free_planar:
      return 3;
  }
  return 0;
}

bool Scene::is_ancestor(int ancestor, int frame) const {
  for (int f = frame; f >= 0; f = frames_[static_cast<size_t>(f)].parent)
    if (f == ancestor) return true;
  return false;
}

const Attachment* KinematicState::attachment_of(int object) const {
  for (const auto& a : attachments)
    if (a.object == object) return &a;
  return nullptr;
}

int KinematicState::held_by(int holder) const {
  for (const auto& a : attachments)
    if (a.holder == holder) return a.object;
  return -1;
}

KinematicState make_state(const Scene& scene, const VectorXd& config) {
  if (config.size() != scene.dim())
    throw KinematicsError("", "configuration has dimension " + std::to_string(config.size()) +
                                  ", scene expects " + std::to_string(scene.dim()));
  return {config, VectorXd::Zero(scene.dim()), {}};
}

namespace {

const Attachment* find_attachment(std::span<const Attachment> attachments, int object) {
  for (const auto& a : attachments)
    if (a.object == object) return &a;
  return nullptr;
}

void check_dimension(const Scene& scene, const VectorXd& config) {
  if (config.size() == scene.dim()) return;
  // Name the first frame whose joint span does not fit.
  for (int f = 1; f < scene.frame_count(); ++f) {
    const int off = scene.dof_offset(f);
    if (off >= 0 && off + scene.dof_count(f) > config.size())
      throw KinematicsError(scene.frame(f).name,
                            "configuration too short (" + std::to_string(config.size()) +
                                " entries, scene needs " + std::to_string(scene.dim()) + ")");
  }
  throw KinematicsError(scene.frame(scene.frame_count() - 1).name,
                        "configuration too long (" + std::to_string(config.size()) +
                            " entries, scene needs " + std::to_string(scene.dim()) + ")");
}

Pose2d joint_transform(const Frame& f, const VectorXd& config, int off) {
  switch (f.joint) {
    case JointType::fixed:
      return Pose2d::identity();
    case JointType::revolute:
      return {0.0, 0.0, config(off)};
    case JointType::free_planar:
      return {config(off), config(off + 1), config(off + 2)};
  }
  return Pose2d::identity();
}

struct FkSolver {
  const Scene& scene;
  const VectorXd& config;
  std::span<const Attachment> attachments;
  std::vector<Pose2d> world;
  std::vector<char> mark;  // 0 pending, 1 visiting, 2 done

  const Pose2d& pose(int f) {
    auto& m = mark[static_cast<size_t>(f)];
    if (m == 2) return world[static_cast<size_t>(f)];
    if (m == 1) throw KinematicsError(scene.frame(f).name, "attachment cycle");
    m = 1;
    Pose2d result;
    if (f == 0) {
      result = Pose2d::identity();
    } else if (const Attachment* a = find_attachment(attachments, f)) {
      result = pose(a->holder) * a->offset;
    } else {
      const Frame& fr = scene.frame(f);
      result = pose(fr.parent) * fr.offset * joint_transform(fr, config, scene.dof_offset(f));
    }
    world[static_cast<size_t>(f)] = result;
    m = 2;
    return world[static_cast<size_t>(f)];
  }
};

}  // namespace

std::vector<Pose2d> forward_kinematics(const Scene& scene, const VectorXd& config,
                                       std::span<const Attachment> attachments) {
  check_dimension(scene, config);
  FkSolver fk{scene, config, attachments, std::vector<Pose2d>(static_cast<size_t>(scene.frame_count())),
              std::vector<char>(static_cast<size_t>(scene.frame_count()), 0)};
  for (int f = 0; f < scene.frame_count(); ++f) fk.pose(f);
  return std::move(fk.world);
}

MatrixXd jacobian(const Scene& scene, const VectorXd& config, int frame, Query query,
                  std::span<const Attachment> attachments) {
  return jacobian(scene, forward_kinematics(scene, config, attachments), frame, query, attachments);
}

MatrixXd jacobian(const Scene& scene, const std::vector<Pose2d>& world, int frame, Query query,
                  std::span<const Attachment> attachments) {
  if (frame < 0 || frame >= scene.frame_count())
    throw KinematicsError(std::to_string(frame), "unknown frame index");
  const int rows = query == Query::position ? 2 : query == Query::orientation ? 1 : 3;
  MatrixXd J = MatrixXd::Zero(rows, scene.dim());
  const Eigen::Vector2d p = world[static_cast<size_t>(frame)].t;

  auto put = [&](int col, const Eigen::Vector2d& dp, double dtheta) {
    if (query != Query::orientation) J.block<2, 1>(0, col) += dp;
    if (query != Query::position) J(rows - 1, col) += dtheta;
  };

  int guard = 0;
  for (int f = frame; f > 0;) {
    if (++guard > 4 * scene.frame_count()) throw KinematicsError(scene.frame(frame).name, "attachment cycle");
    if (const Attachment* a = find_attachment(attachments, f)) {
      f = a->holder;
      continue;
    }
    const Frame& fr = scene.frame(f);
    const int off = scene.dof_offset(f);
    const Eigen::Vector2d o = world[static_cast<size_t>(f)].t;
    if (fr.joint == JointType::revolute) {
      put(off, perp(p - o), 1.0);
    } else if (fr.joint == JointType::free_planar) {
      const Eigen::Matrix2d Rb = (world[static_cast<size_t>(fr.parent)] * fr.offset).R();
      put(off, Rb.col(0), 0.0);
      put(off + 1, Rb.col(1), 0.0);
      put(off + 2, perp(p - o), 1.0);
    }
    f = fr.parent;
  }
  return J;
}

KinematicState attach(const Scene& scene, const KinematicState& state, int holder, int object,
                      const GraspTolerance& tol) {
  const Frame& obj = scene.frame(object);
  if (obj.joint != JointType::free_planar) throw KinematicsError(obj.name, "only free objects can be attached");
  if (state.attachment_of(object)) throw KinematicsError(obj.name, "object is already attached");
  if (scene.is_ancestor(object, holder)) throw KinematicsError(obj.name, "attachment would create a cycle");
  for (const auto& a : state.attachments)
    if (a.holder == object && scene.is_ancestor(a.object, holder))
      throw KinematicsError(obj.name, "attachment would create a cycle");

  const auto world = forward_kinematics(scene, state.config, state.attachments);
  const Pose2d& hp = world[static_cast<size_t>(holder)];
  const Pose2d& op = world[static_cast<size_t>(object)];
  const double dist = (hp.t - op.t).norm();
  if (dist > tol.position)
    throw KinematicsError(obj.name, "grasp out of tolerance: distance " + std::to_string(dist) + " m to '" +
                                        scene.frame(holder).name + "'");
  if (obj.shape.kind == Shape::Kind::box) {
    // Boxes are symmetric under quarter turns.
    const double quarter = std::numbers::pi / 2.0;
    const double d = wrap_angle(op.theta - hp.theta);
    const double off = std::abs(d - quarter * std::round(d / quarter));
    if (off > tol.orientation)
      throw KinematicsError(obj.name, "grasp out of orientation tolerance: " + std::to_string(off) + " rad");
  }
  KinematicState next = state;
  next.attachments.push_back({holder, object, hp.inverse() * op});
  return next;
}

KinematicState detach(const Scene& scene, const KinematicState& state, int object) {
  const Attachment* a = state.attachment_of(object);
  if (!a) throw KinematicsError(scene.frame(object).name, "object is not attached");
  const auto world = forward_kinematics(scene, state.config, state.attachments);
  KinematicState next = state;
  std::erase_if(next.attachments, [&](const Attachment& x) { return x.object == object; });
  set_object_pose(scene, next.config, object, world[static_cast<size_t>(object)]);
  // Anything attached to the released object keeps following it.
  sync_attached(scene, next);
  return next;
}

void sync_attached(const Scene& scene, KinematicState& state) {
  if (state.attachments.empty()) return;
  const auto world = forward_kinematics(scene, state.config, state.attachments);
  for (const auto& a : state.attachments) {
    const Frame& fr = scene.frame(a.object);
    const Pose2d base = world[static_cast<size_t>(fr.parent)] * fr.offset;
    const Pose2d local = base.inverse() * world[static_cast<size_t>(a.object)];
    const int off = scene.dof_offset(a.object);
    state.config(off) = local.t(0);
    state.config(off + 1) = local.t(1);
    state.config(off + 2) = local.theta;
  }
}

ArmFrames add_planar_arm(Scene& scene, const std::string& prefix, const Pose2d& base,
                         std::span<const double> link_lengths, std::optional<JointLimits> limits) {
  ArmFrames arm;
  arm.base = scene.add_frame({prefix + "_base", 0, JointType::fixed, base, Shape::disk(0.05), std::nullopt});
  int parent = arm.base;
  double previous_length = 0.0;
  for (size_t i = 0; i < link_lengths.size(); ++i) {
    const int j = scene.add_frame({prefix + "_j" + std::to_string(i + 1), parent, JointType::revolute,
                                   Pose2d(previous_length, 0.0, 0.0), Shape::none(), limits});
    arm.joints.push_back(j);
    parent = j;
    previous_length = link_lengths[i];
  }
  arm.gripper = scene.add_frame(
      {prefix + "_gripper", parent, JointType::fixed, Pose2d(previous_length, 0.0, 0.0), Shape::disk(0.02), std::nullopt});
  arm.virtual_frame =
      scene.add_frame({prefix + "_virtual", arm.gripper, JointType::fixed, Pose2d::identity(), Shape::none(), std::nullopt});
  return arm;
}

int add_object(Scene& scene, const std::string& name, Shape shape) {
  return scene.add_frame({name, 0, JointType::free_planar, Pose2d::identity(), shape, std::nullopt});
}

void set_object_pose(const Scene& scene, VectorXd& config, int object, const Pose2d& pose) {
  const Frame& fr = scene.frame(object);
  if (fr.joint != JointType::free_planar) throw KinematicsError(fr.name, "not a free object");
  Pose2d base = fr.offset;
  if (fr.parent != 0) base = forward_kinematics(scene, config)[static_cast<size_t>(fr.parent)] * fr.offset;
  const Pose2d local = base.inverse() * pose;
  const int off = scene.dof_offset(object);
  config(off) = local.t(0);
  config(off + 1) = local.t(1);
  config(off + 2) = local.theta;
}

}  // namespace fc3
