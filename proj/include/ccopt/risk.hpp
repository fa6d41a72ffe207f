#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccopt/geometry.hpp"
#include "ccopt/kinematics.hpp"

// Collision-risk certificates for obstacles whose position is Gaussian.
//
// An eps-shadow of an obstacle is its nominal shape grown by the covariance
// ellipsoid {d : d^T Sigma^-1 d <= c} with c = chi2_inv_cdf(1 - eps, n). It
// contains the displaced obstacle with probability 1 - eps, so a robot that
// misses it collides with probability at most eps.

namespace ccopt::risk {

using geometry::ConvexBody;
using geometry::Mat3;
using geometry::Vec3;
using kinematics::JointState;
using kinematics::RobotModel;

/// Nominal shape plus a Gaussian translation d ~ N(0, Sigma).
class UncertainObstacle {
 public:
  /// `dim` is the workspace dimension (2 or 3); planar covariances keep their
  /// third row and column zero.
  UncertainObstacle(ConvexBody nominal, const Mat3& covariance, int dim, std::string name = {});

  const ConvexBody& nominal() const { return nominal_; }
  const Mat3& covariance() const { return unit_.covariance(); }
  int dim() const { return unit_.dim(); }
  const std::string& name() const { return name_; }
  /// Covariance ellipsoid with unit Mahalanobis radius.
  const geometry::Ellipsoid& unit_ellipsoid() const { return unit_; }

 private:
  ConvexBody nominal_;
  geometry::Ellipsoid unit_;
  std::string name_;
};

/// Squared Mahalanobis radius of the eps-shadow.
double shadow_squared_radius(double eps, int dim);

ConvexBody shadow(const UncertainObstacle& obstacle, double eps);
/// Shadow grown only on the side n^T d >= 0; an eps/2-shadow.
ConvexBody half_shadow(const UncertainObstacle& obstacle, double eps, const Vec3& normal);

ConvexBody shadow_with_radius(const UncertainObstacle& obstacle, double squared_radius);
ConvexBody half_shadow_with_radius(const UncertainObstacle& obstacle, double squared_radius, const Vec3& normal);

/// Where a shadow search stopped against the robot.
struct ShadowContact {
  bool touching = false;       // false: the shadow at eps_tol still misses
  double eps = 1.0;
  double squared_radius = 0.0;
  int link = -1;
  Vec3 normal = Vec3::Zero();         // robot into shadow
  Vec3 robot_point = Vec3::Zero();    // witness on the robot link
  Vec3 support_vector = Vec3::Zero(); // ellipsoid offset of the shadow witness
  double gap = 0.0;                   // remaining clearance at the certified radius
  bool on_cut = false;                // half-shadow contact lies on the flat cut
};

struct RiskCertificate {
  double eps1 = 1.0;
  double eps2 = 1.0;
  double eps_prime = 1.0;
  Vec3 contact_normal = Vec3::Zero();
  Vec3 contact_vector1 = Vec3::Zero();
  Vec3 contact_vector2 = Vec3::Zero();
  int link_index = -1;
  Vec3 contact_point = Vec3::Zero();
  bool saturated = false;
  /// Robot-to-nominal signed distance at the certified configuration.
  double nominal_distance = 0.0;
  ShadowContact first;
  ShadowContact second;
};

struct CertifyOptions {
  double eps_tol = 1e-6;
  /// Clearance below which a shadow counts as touching (meters).
  double contact_tolerance = 1e-12;
  geometry::QueryOptions query{.gjk_relative_tolerance = 1e-9};
};

RiskCertificate certify_risk(const RobotModel& robot, const JointState& theta, const UncertainObstacle& obstacle,
                             double eps_tol);
RiskCertificate certify_risk(const RobotModel& robot, const JointState& theta, const UncertainObstacle& obstacle,
                             const CertifyOptions& options);
/// Certification against bodies already posed by forward kinematics.
RiskCertificate certify_risk(const std::vector<kinematics::PosedBody>& bodies, const UncertainObstacle& obstacle,
                             const CertifyOptions& options);

/// Gradient of one contact's eps with respect to the joint coordinates; zero
/// when the contact is not touching.
Eigen::VectorXd contact_gradient(const ShadowContact& contact, const RobotModel& robot, const JointState& theta,
                                 const UncertainObstacle& obstacle);

/// Gradient of eps_prime with respect to the joint coordinates.
Eigen::VectorXd risk_gradient(const RiskCertificate& cert, const RobotModel& robot, const JointState& theta,
                              const UncertainObstacle& obstacle);

struct RiskLinearization {
  double eps0 = 0.0;
  Eigen::VectorXd gradient;
  JointState anchor;

  double operator()(const JointState& theta) const { return eps0 + gradient.dot(theta - anchor); }
};

RiskLinearization linearize_risk(const RiskCertificate& cert, const Eigen::VectorXd& gradient, const JointState& theta0);

struct SceneRisk {
  std::vector<RiskCertificate> certificates;
  double total = 0.0;
};

SceneRisk scene_risk(const RobotModel& robot, const JointState& theta, const std::vector<UncertainObstacle>& obstacles,
                     double eps_tol);
SceneRisk scene_risk(const RobotModel& robot, const JointState& theta, const std::vector<UncertainObstacle>& obstacles,
                     const CertifyOptions& options);

}  // namespace ccopt::risk
