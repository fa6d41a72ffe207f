#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccopt/geometry.hpp"

namespace ccopt::kinematics {

using geometry::ConvexBody;
using geometry::Pose;
using geometry::Vec3;
using JointState = Eigen::VectorXd;
using Jacobian = Eigen::Matrix<double, 3, Eigen::Dynamic>;

enum class JointType { Revolute, Prismatic };

/// Joint i moves link i + 1 relative to link i. The joint frame sits at
/// `offset` in the parent link frame; the motion (rotation about or
/// translation along `axis`) is applied in that joint frame.
struct Joint {
  JointType type = JointType::Revolute;
  Vec3 axis = Vec3::UnitZ();
  Pose offset;
  double lower = -1e9;
  double upper = 1e9;
  std::string name;
};

/// Collision geometry of one link, expressed in the link frame.
struct Link {
  std::vector<ConvexBody> shapes;
  std::string name;
};

/// Collision body of a robot posed in the world.
struct PosedBody {
  int link = 0;
  ConvexBody body;
};

/// Serial chain. Link 0 is the base (fixed at `base`); link i + 1 follows joint i.
class RobotModel {
 public:
  RobotModel(Pose base, Link base_link, std::vector<Joint> joints, std::vector<Link> links);

  int dof() const { return static_cast<int>(joints_.size()); }
  int link_count() const { return static_cast<int>(links_.size()); }
  const Pose& base() const { return base_; }
  const std::vector<Joint>& joints() const { return joints_; }
  const Link& link(int index) const;
  JointState lower_limits() const;
  JointState upper_limits() const;

 private:
  Pose base_;
  std::vector<Joint> joints_;
  std::vector<Link> links_;
};

/// World pose of every link frame (dof() + 1 entries, base first).
std::vector<Pose> forward_kinematics(const RobotModel& robot, const JointState& theta);

/// Positional Jacobian of a world point rigidly attached to `link_index`.
Jacobian point_jacobian(const RobotModel& robot, const JointState& theta, int link_index, const Vec3& world_point);

/// Same, reusing link poses already computed by forward_kinematics.
Jacobian point_jacobian(const RobotModel& robot, const std::vector<Pose>& link_poses, int link_index,
                        const Vec3& world_point);

/// All collision shapes placed at the given link poses, in link order.
std::vector<PosedBody> posed_bodies(const RobotModel& robot, const std::vector<Pose>& link_poses);

}  // namespace ccopt::kinematics
