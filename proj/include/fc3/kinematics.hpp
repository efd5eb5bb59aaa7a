#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "fc3/geometry.hpp"

namespace fc3 {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class JointType { fixed, revolute, free_planar };

struct Shape {
  enum class Kind { none, disk, box, hook };
  Kind kind = Kind::none;
  // disk: radius; box: width, height; hook: long arm, short arm.
  double a = 0.0;
  double b = 0.0;

  static Shape none() { return {}; }
  static Shape disk(double r) { return {Kind::disk, r, 0.0}; }
  static Shape box(double w, double h) { return {Kind::box, w, h}; }
  static Shape hook(double long_arm, double short_arm) { return {Kind::hook, long_arm, short_arm}; }

  /// Radius of the disk used for distance features.
  double radius() const;
};

struct JointLimits {
  double lo;
  double hi;
};

struct Frame {
  std::string name;
  int parent = -1;
  JointType joint = JointType::fixed;
  Pose2d offset;
  Shape shape;
  std::optional<JointLimits> limits;
};

/// Thrown for malformed scenes, unknown frames and dimension mismatches.
class KinematicsError : public std::runtime_error {
 public:
  KinematicsError(const std::string& frame, const std::string& what)
      : std::runtime_error(frame.empty() ? what : "frame '" + frame + "': " + what), frame_(frame) {}
  const std::string& frame() const { return frame_; }

 private:
  std::string frame_;
};

/// Planar frame forest with a single world root (index 0, named "world").
///
/// Degrees of freedom are laid out in frame insertion order: one entry per
/// revolute joint and three (x, y, theta) per free-planar frame. Attachments
/// never change this layout.
class Scene {
 public:
  Scene();

  int add_frame(Frame frame);

  int frame_index(const std::string& name) const;
  bool has_frame(const std::string& name) const { return by_name_.count(name) > 0; }
  const Frame& frame(int i) const { return frames_.at(static_cast<size_t>(i)); }
  int frame_count() const { return static_cast<int>(frames_.size()); }
  const std::vector<Frame>& frames() const { return frames_; }

  int dim() const { return dim_; }
  /// First configuration index owned by the frame's joint, or -1 for fixed frames.
  int dof_offset(int frame) const { return dof_offset_.at(static_cast<size_t>(frame)); }
  int dof_count(int frame) const;

  /// Configuration indices of revolute joints, in layout order.
  const std::vector<int>& robot_dofs() const { return robot_dofs_; }
  /// Frames with a free-planar joint (movable objects).
  const std::vector<int>& object_frames() const { return object_frames_; }

  bool is_ancestor(int ancestor, int frame) const;

 private:
  std::vector<Frame> frames_;
  std::unordered_map<std::string, int> by_name_;
  std::vector<int> dof_offset_;
  std::vector<int> robot_dofs_;
  std::vector<int> object_frames_;
  int dim_ = 0;
};

/// Kinematic re-parenting of a free object to a holder frame.
struct Attachment {
  int holder;
  int object;
  Pose2d offset;  // object pose expressed in the holder frame
};

using Attachments = std::vector<Attachment>;

struct KinematicState {
  VectorXd config;
  VectorXd velocity;
  Attachments attachments;

  const Attachment* attachment_of(int object) const;
  /// Object held by `holder`, or -1.
  int held_by(int holder) const;
};

KinematicState make_state(const Scene& scene, const VectorXd& config);

enum class Query { position, orientation, pose };

/// World pose of every frame. Attached objects follow their holder and
/// ignore their own free coordinates.
std::vector<Pose2d> forward_kinematics(const Scene& scene, const VectorXd& config,
                                       std::span<const Attachment> attachments = {});

/// Analytic Jacobian of a frame's world pose with respect to the configuration.
/// Rows: 2 (position), 1 (orientation) or 3 (pose).
MatrixXd jacobian(const Scene& scene, const VectorXd& config, int frame, Query query,
                  std::span<const Attachment> attachments = {});

/// Same as above but reuses precomputed world poses.
MatrixXd jacobian(const Scene& scene, const std::vector<Pose2d>& world, int frame, Query query,
                  std::span<const Attachment> attachments = {});

struct GraspTolerance {
  double position = 0.02;
  double orientation = 0.1;
};

/// Re-parents `object` to `holder`, capturing the current relative pose.
KinematicState attach(const Scene& scene, const KinematicState& state, int holder, int object,
                      const GraspTolerance& tol = {});

/// Releases `object` at its current world pose.
KinematicState detach(const Scene& scene, const KinematicState& state, int object);

/// Writes the world pose of attached objects back into their free coordinates.
void sync_attached(const Scene& scene, KinematicState& state);

struct ArmFrames {
  int base;
  std::vector<int> joints;
  int gripper;
  int virtual_frame;
};

/// Adds a fixed-base planar revolute chain named `<prefix>_base`, `<prefix>_j1`..,
/// `<prefix>_gripper` and a virtual manipulation frame `<prefix>_virtual`.
ArmFrames add_planar_arm(Scene& scene, const std::string& prefix, const Pose2d& base,
                         std::span<const double> link_lengths, std::optional<JointLimits> limits = {});

/// Adds a free-planar object under the world frame.
int add_object(Scene& scene, const std::string& name, Shape shape);

/// Configuration with every free object coordinate set so that its world pose equals `pose`.
void set_object_pose(const Scene& scene, VectorXd& config, int object, const Pose2d& pose);

}  // namespace fc3
