#include <cmath>
#include <numbers>
#include <random>

#include "../support/robots.hpp"
#include "ccopt/error.hpp"
#include "ccopt/kinematics.hpp"
#include "doctest.h"

using namespace ccopt;
using namespace ccopt::kinematics;
using geometry::Mat3;

namespace {

// 4x4 homogeneous-transform chain written independently of Pose.
Eigen::Matrix4d homogeneous(const Mat3& r, const Vec3& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = t;
  return m;
}

Mat3 rodrigues(const Vec3& k, double a) {
  Mat3 kx;
  kx << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return Mat3::Identity() + std::sin(a) * kx + (1 - std::cos(a)) * kx * kx;
}

std::vector<Eigen::Matrix4d> chain_oracle(const RobotModel& robot, const JointState& q) {
  std::vector<Eigen::Matrix4d> out{homogeneous(robot.base().rotation, robot.base().translation)};
  for (int i = 0; i < robot.dof(); ++i) {
    const Joint& j = robot.joints()[i];
    const Eigen::Matrix4d off = homogeneous(j.offset.rotation, j.offset.translation);
    const Eigen::Matrix4d mot = j.type == JointType::Revolute ? homogeneous(rodrigues(j.axis, q[i]), Vec3::Zero())
                                                               : homogeneous(Mat3::Identity(), q[i] * j.axis);
    out.push_back(out.back() * off * mot);
  }
  return out;
}

RobotModel planar_two_link() {
  std::vector<Joint> joints = {testbots::revolute(Vec3::UnitZ(), Vec3::Zero()),
                               testbots::revolute(Vec3::UnitZ(), Vec3(1, 0, 0))};
  std::vector<Link> links(2);
  return RobotModel(Pose::identity(), Link{}, joints, links);
}

}  // namespace

TEST_CASE("forward kinematics reference cases") {
  // Two unit links: frames of the second joint and of a tool frame at the tip.
  std::vector<Joint> joints = {testbots::revolute(Vec3::UnitZ(), Vec3(1, 0, 0)),
                               testbots::revolute(Vec3::UnitZ(), Vec3(1, 0, 0))};
  const RobotModel two(Pose::identity(), Link{}, joints, std::vector<Link>(2));
  const auto poses = forward_kinematics(two, JointState::Zero(2));
  CHECK(poses[1].translation.isApprox(Vec3(1, 0, 0)));
  CHECK(poses[2].translation.isApprox(Vec3(2, 0, 0)));

  const auto quarter = forward_kinematics(planar_two_link(), (JointState(2) << std::numbers::pi / 2, 0).finished());
  CHECK((quarter[2].translation - Vec3(0, 1, 0)).norm() <= 1e-12);

  CHECK_THROWS_AS(forward_kinematics(two, JointState::Zero(3)), DomainError);
}

TEST_CASE("forward kinematics matches a homogeneous-transform oracle") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const RobotModel arm = testbots::arm3();
  for (int trial = 0; trial < 100; ++trial) {
    const JointState q = (JointState(3) << u(rng), u(rng), u(rng)).finished();
    const auto poses = forward_kinematics(arm, q);
    const auto oracle = chain_oracle(arm, q);
    for (std::size_t k = 0; k < poses.size(); ++k) {
      CHECK((poses[k].rotation - oracle[k].topLeftCorner<3, 3>()).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((poses[k].translation - oracle[k].topRightCorner<3, 1>()).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("point jacobian reference cases") {
  std::vector<Joint> joints = {testbots::revolute(Vec3::UnitZ(), Vec3::Zero())};
  const RobotModel spinner(Pose::identity(), Link{}, joints, std::vector<Link>(1));
  const auto j = point_jacobian(spinner, JointState::Zero(1), 1, Vec3(1, 0, 0));
  CHECK(j.col(0).isApprox(Vec3(0, 1, 0)));

  const RobotModel slider = testbots::slider();
  CHECK(point_jacobian(slider, JointState::Constant(1, 0.7), 1, Vec3(5, -2, 3)).col(0).isApprox(Vec3::UnitX()));

  CHECK_THROWS_AS(point_jacobian(slider, JointState::Zero(1), 2, Vec3::Zero()), DomainError);
  CHECK(point_jacobian(slider, JointState::Zero(1), 0, Vec3::Zero()).isZero());
}

TEST_CASE("point jacobian matches finite differences") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> loc(-0.3, 0.3);
  const RobotModel arm = testbots::arm3();
  for (int trial = 0; trial < 100; ++trial) {
    const JointState q = (JointState(3) << u(rng), u(rng), u(rng)).finished();
    const int link = 1 + trial % 3;
    const Vec3 local(loc(rng), loc(rng), loc(rng));
    auto world = [&](const JointState& x) { return forward_kinematics(arm, x)[link] * local; };
    const auto jac = point_jacobian(arm, q, link, world(q));

    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
      JointState qp = q, qm = q;
      qp[i] += h;
      qm[i] -= h;
      const Vec3 fd = (world(qp) - world(qm)) / (2 * h);
      CHECK((fd - jac.col(i)).norm() <= 1e-6);
    }

    // First-order model error over a small random step.
    Eigen::Vector3d dq(loc(rng), loc(rng), loc(rng));
    dq *= 1e-4 / dq.norm();
    const Vec3 actual = world(q + dq) - world(q);
    CHECK((jac * dq - actual).norm() <= 1e-8 + 1e-4 * dq.squaredNorm());
  }
}

TEST_CASE("distal joints never move a proximal point") {
  const RobotModel arm = testbots::arm3();
  const JointState q = (JointState(3) << 0.3, -0.4, 1.1).finished();
  JointState q2 = q;
  q2[2] += 0.8;
  CHECK((forward_kinematics(arm, q)[2].translation - forward_kinematics(arm, q2)[2].translation).norm() == 0.0);
  const auto jac = point_jacobian(arm, q, 2, forward_kinematics(arm, q)[2] * Vec3(0.2, 0, 0));
  CHECK(jac.col(2).isZero());
}

TEST_CASE("robot model validation") {
  std::vector<Joint> joints = {testbots::prismatic(Vec3(1, 1, 0))};
  CHECK_THROWS_AS(RobotModel(Pose::identity(), Link{}, joints, std::vector<Link>(1)), DomainError);
  joints = {testbots::prismatic(Vec3::UnitX(), 1.0, -1.0)};
  CHECK_THROWS_AS(RobotModel(Pose::identity(), Link{}, joints, std::vector<Link>(1)), DomainError);
  joints = {testbots::prismatic(Vec3::UnitX())};
  CHECK_THROWS_AS(RobotModel(Pose::identity(), Link{}, joints, std::vector<Link>(2)), DomainError);
}
