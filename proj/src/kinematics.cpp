#include "ccopt/kinematics.hpp"

#include <cmath>
#include <string>

#include "ccopt/error.hpp"

namespace ccopt::kinematics {

namespace {

// Joint frame after the joint's own motion, relative to the joint frame at zero.
Pose joint_motion(const Joint& j, double q) {
  if (j.type == JointType::Prismatic) return Pose::from_translation(q * j.axis);
  return {Eigen::AngleAxisd(q, j.axis).toRotationMatrix(), Vec3::Zero()};
}

}  // namespace

RobotModel::RobotModel(Pose base, Link base_link, std::vector<Joint> joints, std::vector<Link> links)
    : base_(std::move(base)), joints_(std::move(joints)) {
  if (links.size() != joints_.size()) {
    throw DomainError("robot needs one link per joint (got " + std::to_string(joints_.size()) + " joints, " +
                      std::to_string(links.size()) + " links)");
  }
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    Joint& j = joints_[i];
    if (!j.axis.allFinite() || std::abs(j.axis.norm() - 1.0) > 1e-9) {
      throw DomainError("joint " + std::to_string(i) + " axis must be a unit vector");
    }
    if (!(j.lower <= j.upper)) throw DomainError("joint " + std::to_string(i) + " has lower limit above upper");
  }
  links_.reserve(links.size() + 1);
  links_.push_back(std::move(base_link));
  for (auto& l : links) links_.push_back(std::move(l));
}

const Link& RobotModel::link(int index) const {
  if (index < 0 || index >= link_count()) throw DomainError("link index " + std::to_string(index) + " out of range");
  return links_[static_cast<std::size_t>(index)];
}

JointState RobotModel::lower_limits() const {
  JointState v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints_[static_cast<std::size_t>(i)].lower;
  return v;
}

JointState RobotModel::upper_limits() const {
  JointState v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints_[static_cast<std::size_t>(i)].upper;
  return v;
}

std::vector<Pose> forward_kinematics(const RobotModel& robot, const JointState& theta) {
  if (theta.size() != robot.dof()) {
    throw DomainError("joint state has " + std::to_string(theta.size()) + " entries, robot has " +
                      std::to_string(robot.dof()) + " joints");
  }
  if (!theta.allFinite()) throw DomainError("joint state must be finite");
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(robot.dof()) + 1);
  poses.push_back(robot.base());
  for (int i = 0; i < robot.dof(); ++i) {
    const Joint& j = robot.joints()[static_cast<std::size_t>(i)];
    poses.push_back(poses.back() * j.offset * joint_motion(j, theta[i]));
  }
  return poses;
}

Jacobian point_jacobian(const RobotModel& robot, const std::vector<Pose>& link_poses, int link_index,
                        const Vec3& world_point) {
  if (link_index < 0 || link_index >= robot.link_count()) {
    throw DomainError("link index " + std::to_string(link_index) + " out of range");
  }
  Jacobian jac = Jacobian::Zero(3, robot.dof());
  for (int i = 0; i < link_index; ++i) {
    const Joint& j = robot.joints()[static_cast<std::size_t>(i)];
    const Pose frame = link_poses[static_cast<std::size_t>(i)] * j.offset;
    const Vec3 axis = frame.rotation * j.axis;
    jac.col(i) = j.type == JointType::Prismatic ? axis : Vec3(axis.cross(world_point - frame.translation));
  }
  return jac;
}

Jacobian point_jacobian(const RobotModel& robot, const JointState& theta, int link_index, const Vec3& world_point) {
  return point_jacobian(robot, forward_kinematics(robot, theta), link_index, world_point);
}

std::vector<PosedBody> posed_bodies(const RobotModel& robot, const std::vector<Pose>& link_poses) {
  std::vector<PosedBody> out;
  for (int l = 0; l < robot.link_count(); ++l) {
    for (const auto& s : robot.link(l).shapes) out.push_back({l, s.posed(link_poses[static_cast<std::size_t>(l)])});
  }
  return out;
}

}  // namespace ccopt::kinematics
