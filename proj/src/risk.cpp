#include "ccopt/risk.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>

#include "ccopt/error.hpp"
#include "ccopt/stats.hpp"

namespace ccopt::risk {

using geometry::Ellipsoid;
using geometry::HalfEllipsoid;
using kinematics::PosedBody;

namespace {

void require_eps(double eps, const char* what) {
  if (!(eps > 0.0 && eps < 1.0)) {
    std::ostringstream msg;
    msg << what << ": eps must lie in (0, 1), got " << eps;
    throw DomainError(msg.str());
  }
}

Vec3 require_unit(const Vec3& n, int dim) {
  if (!n.allFinite() || std::abs(n.norm() - 1.0) > 1e-9) throw DomainError("half-shadow normal must be a unit vector");
  if (dim == 2 && std::abs(n.z()) > 1e-9) throw DomainError("planar half-shadow normal must lie in the z = 0 plane");
  return n;
}

// Closest robot body to a shadow, or the first body found touching it.
struct Probe {
  bool hit = false;
  double gap = std::numeric_limits<double>::infinity();
  double lower = std::numeric_limits<double>::infinity();
  int body = -1;
  Vec3 normal = Vec3::Zero();
  Vec3 robot_point = Vec3::Zero();
  /// Lower bound on the clearance of every other body.
  double others_lower = std::numeric_limits<double>::infinity();
};

// `warm` holds the last normal found for each body and seeds the next query.
Probe probe(const std::vector<PosedBody>& bodies, const ConvexBody& target, geometry::QueryOptions q,
            double contact_tol, std::vector<Vec3>& warm) {
  Probe best;
  const Vec3 tc = target.center();
  const double tr = target.bounding_radius();
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    const ConvexBody& b = bodies[i].body;
    Vec3 offset = b.center() - tc;
    if (q.dim == 2) offset.z() = 0.0;
    const double lower = offset.norm() - b.bounding_radius() - tr;
    if (lower > best.gap) {
      best.others_lower = std::min(best.others_lower, lower);
      continue;
    }
    q.warm_start = warm[i];
    const auto d = geometry::distance(b, target, q);
    warm[i] = d.normal;
    // A body is only cleared when its distance is certified positive.
    if (d.signed_distance <= contact_tol || d.lower_bound <= 0.0) {
      Probe hit;
      hit.hit = true;
      hit.gap = d.signed_distance;
      hit.lower = d.lower_bound;
      hit.body = static_cast<int>(i);
      hit.normal = d.normal;
      hit.robot_point = d.witness_a;
      return hit;
    }
    if (d.signed_distance < best.gap) {
      best.others_lower = std::min(best.others_lower, best.lower);
      best.gap = d.signed_distance;
      best.lower = d.lower_bound;
      best.body = static_cast<int>(i);
      best.normal = d.normal;
      best.robot_point = d.witness_a;
    } else {
      best.others_lower = std::min(best.others_lower, d.lower_bound);
    }
  }
  return best;
}

// Displacement of the obstacle that brings its nominal shape into contact
// with `body` at the smallest Mahalanobis radius: the closest point of
// body - nominal in whitened coordinates. Unlike the direction of a GJK query
// against a shadow that barely misses, this is well conditioned, because the
// whitened distance is the contact radius itself.
struct WhitenedContact {
  double radius = 0.0;
  Vec3 displacement = Vec3::Zero();
};

std::optional<WhitenedContact> whitened_contact(const ConvexBody& body, const UncertainObstacle& obstacle,
                                                geometry::QueryOptions q) {
  const int dim = obstacle.dim();
  Mat3 l = Mat3::Identity();
  l.topLeftCorner(dim, dim) = obstacle.unit_ellipsoid().cholesky().topLeftCorner(dim, dim);
  const Mat3 l_inv = l.inverse();
  const ConvexBody reach =
      ConvexBody::minkowski_sum(body, obstacle.nominal().linear_map(-Mat3::Identity())).linear_map(l_inv);
  q.gjk_relative_tolerance = 1e-13;
  q.stop_below = -std::numeric_limits<double>::infinity();
  try {
    const auto d = geometry::distance(ConvexBody::point(Vec3::Zero()), reach, q);
    if (!(d.signed_distance > 0.0)) return std::nullopt;
    Vec3 y = d.witness_b;
    if (dim == 2) y.z() = 0.0;
    return WhitenedContact{y.norm(), l * y};
  } catch (const NumericalError&) {
    return std::nullopt;
  }
}

// The whitened contact, when it describes the same contact as the search:
// same radius up to the search resolution and, for the half shadow, a
// displacement on the grown side of the cut.
std::optional<WhitenedContact> matching_contact(const ConvexBody& body, const UncertainObstacle& obstacle,
                                                const geometry::QueryOptions& q, double s, const Vec3* cut_normal) {
  const auto w = whitened_contact(body, obstacle, q);
  if (!w) return std::nullopt;
  if (std::abs(w->radius - s) > 1e-6 * std::max(1.0, s)) return std::nullopt;
  if (cut_normal && cut_normal->dot(w->displacement) <= 0.0) return std::nullopt;
  return w;
}

// Largest radius still certified clear, extrapolated from the verified miss
// at s_lo. Along the contact normal n the separation of the shadow shrinks
// exactly linearly, at rate slope_n = h_unit(-n), and bounds the clearance
// from below; every other body closes at most at rate sigma_max.
double extrapolate(const ConvexBody& body, const ConvexBody& shadow_lo, double s_lo, double s_hi,
                   double others_lower, const Vec3& n, double slope_n, double sigma_max) {
  const double sep = n.dot(shadow_lo.support(-n)) - n.dot(body.support(n));
  double s = s_hi;
  if (slope_n > 0.0) s = std::min(s, s_lo + std::max(sep, 0.0) / slope_n);
  if (std::isfinite(others_lower)) s = std::min(s, s_lo + std::max(others_lower, 0.0) / sigma_max);
  return s >= s_lo && s < s_hi ? s : s_lo;
}

struct SearchResult {
  double s = 0.0;  // Mahalanobis radius (sqrt of the squared radius) of the last verified miss
  Probe at;
  double s_hi = 0.0;  // smallest radius found touching
};

// Finds the largest radius s whose shadow still misses the robot, given a
// miss at s_lo and a hit at s_hi. The clearance D(s) of a growing shadow is a
// maximum of affine functions of s, hence convex and decreasing, so a Newton
// step taken from a verified miss never jumps past the contact radius of the
// closest body; steps are still verified and the bracket falls back to
// bisection whenever another body is hit first.
SearchResult search_contact(const std::vector<PosedBody>& bodies, double s_lo, Probe at_lo, double s_hi,
                            const std::function<ConvexBody(double)>& shadow_at,
                            const std::function<double(const Vec3&)>& unit_support_value, stats::Dof dof,
                            const CertifyOptions& opt, const geometry::QueryOptions& q,
                            std::vector<Vec3>& warm) {
  const double target_gap = std::max(1e-7, 100.0 * opt.contact_tolerance);
  for (int iter = 0; iter < 400; ++iter) {
    const double eps_gap = stats::chi2_sf(s_lo * s_lo, dof) - stats::chi2_sf(s_hi * s_hi, dof);
    if (eps_gap <= opt.eps_tol && at_lo.gap <= target_gap) return {s_lo, at_lo, s_hi};
    if (s_hi - s_lo <= 1e-15 * std::max(1.0, s_hi)) break;

    const double h = unit_support_value(-at_lo.normal);
    // Below the resolution of the distance query the bracket cannot shrink further in clearance terms.
    if (eps_gap <= opt.eps_tol && (s_hi - s_lo) * h <= target_gap) return {s_lo, at_lo, s_hi};
    double step = at_lo.gap > target_gap ? at_lo.gap - 0.5 * target_gap : at_lo.gap + target_gap;
    double s_new = h > 0.0 ? s_lo + step / h : std::numeric_limits<double>::infinity();
    if (!(s_new > s_lo && s_new < s_hi)) s_new = 0.5 * (s_lo + s_hi);

    const Probe p = probe(bodies, shadow_at(s_new), q, opt.contact_tolerance, warm);
    if (p.hit) {
      s_hi = s_new;
      continue;
    }
    if (p.lower > at_lo.gap + 1e-9) {
      std::ostringstream msg;
      msg << "shadow clearance grew from " << at_lo.gap << " to " << p.gap << " as the shadow grew (radius " << s_lo
          << " -> " << s_new << "); intersection predicate is not monotone";
      throw NumericalError(msg.str());
    }
    s_lo = s_new;
    at_lo = p;
  }
  const double eps_gap = stats::chi2_sf(s_lo * s_lo, dof) - stats::chi2_sf(s_hi * s_hi, dof);
  if (eps_gap <= opt.eps_tol) return {s_lo, at_lo, s_hi};
  std::ostringstream msg;
  msg << "shadow radius search stalled with eps bracket " << eps_gap << " above tolerance " << opt.eps_tol;
  throw NumericalError(msg.str());
}

}  // namespace

UncertainObstacle::UncertainObstacle(ConvexBody nominal, const Mat3& covariance, int dim, std::string name)
    : nominal_(std::move(nominal)), unit_(covariance, dim, 1.0), name_(std::move(name)) {}

double shadow_squared_radius(double eps, int dim) {
  require_eps(eps, "shadow");
  return stats::chi2_inv_sf(eps, stats::Dof(dim));
}

ConvexBody shadow_with_radius(const UncertainObstacle& obstacle, double squared_radius) {
  return ConvexBody::minkowski_sum(obstacle.nominal(),
                                   ConvexBody::ellipsoid(obstacle.unit_ellipsoid().with_squared_radius(squared_radius)));
}

ConvexBody half_shadow_with_radius(const UncertainObstacle& obstacle, double squared_radius, const Vec3& normal) {
  const HalfEllipsoid h(obstacle.unit_ellipsoid().with_squared_radius(squared_radius), require_unit(normal, obstacle.dim()));
  return ConvexBody::minkowski_sum(obstacle.nominal(), ConvexBody::half_ellipsoid(h));
}

ConvexBody shadow(const UncertainObstacle& obstacle, double eps) {
  return shadow_with_radius(obstacle, shadow_squared_radius(eps, obstacle.dim()));
}

ConvexBody half_shadow(const UncertainObstacle& obstacle, double eps, const Vec3& normal) {
  return half_shadow_with_radius(obstacle, shadow_squared_radius(eps, obstacle.dim()), normal);
}

RiskCertificate certify_risk(const std::vector<PosedBody>& bodies, const UncertainObstacle& obstacle,
                             const CertifyOptions& options) {
  if (!(options.eps_tol > 0.0 && options.eps_tol < 0.5)) {
    throw DomainError("eps_tol must lie in (0, 0.5), got " + std::to_string(options.eps_tol));
  }
  const stats::Dof dof(obstacle.dim());
  geometry::QueryOptions q = options.query;
  q.dim = obstacle.dim();
  q.compute_penetration = false;
  q.stop_below = options.contact_tolerance;

  RiskCertificate cert;
  const double eps_tol = options.eps_tol;
  if (bodies.empty()) {
    cert.eps1 = cert.eps2 = cert.eps_prime = eps_tol;
    cert.nominal_distance = std::numeric_limits<double>::infinity();
    return cert;
  }

  std::vector<Vec3> warm(bodies.size(), Vec3::Zero());
  const Probe nominal = probe(bodies, obstacle.nominal(), q, options.contact_tolerance, warm);
  cert.nominal_distance = nominal.gap;
  cert.link_index = bodies[static_cast<std::size_t>(nominal.body)].link;
  cert.contact_normal = nominal.normal;
  cert.contact_point = nominal.robot_point;
  if (nominal.hit) {
    cert.saturated = true;
    return cert;
  }

  const double c_max = stats::chi2_inv_sf(eps_tol, dof);
  const double s_max = std::sqrt(c_max);
  const Ellipsoid& unit = obstacle.unit_ellipsoid();
  const Probe at_max = probe(bodies, shadow_with_radius(obstacle, c_max), q, options.contact_tolerance, warm);
  if (!at_max.hit) {
    // Even the eps_tol shadow misses: the risk is below resolution.
    cert.eps1 = cert.eps2 = cert.eps_prime = eps_tol;
    cert.first.eps = cert.second.eps = eps_tol;
    cert.first.squared_radius = cert.second.squared_radius = c_max;
    return cert;
  }

  auto full_at = [&](double s) { return shadow_with_radius(obstacle, s * s); };
  auto full_support = [&](const Vec3& u) { return u.dot(unit.support(u)); };
  const SearchResult r1 = search_contact(bodies, 0.0, nominal, s_max, full_at, full_support, dof, options, q, warm);

  const double sigma_max = unit.max_stddev();
  ShadowContact& first = cert.first;
  const ConvexBody& body1 = bodies[static_cast<std::size_t>(r1.at.body)].body;
  const auto w1 = matching_contact(body1, obstacle, q, r1.s, nullptr);
  first.touching = true;
  first.link = bodies[static_cast<std::size_t>(r1.at.body)].link;
  first.normal = w1 ? Vec3(-unit.inverse_times(w1->displacement).normalized()) : r1.at.normal;
  first.robot_point = r1.at.robot_point;
  const double s1 = extrapolate(body1, full_at(r1.s), r1.s, r1.s_hi, r1.at.others_lower, first.normal,
                                full_support(-first.normal), sigma_max);
  first.squared_radius = s1 * s1;
  first.eps = stats::chi2_sf(first.squared_radius, dof);
  first.support_vector = w1 ? Vec3((s1 / w1->radius) * w1->displacement)
                            : unit.with_squared_radius(first.squared_radius).support(-first.normal);
  first.gap = r1.at.gap - (s1 - r1.s) * full_support(-first.normal);

  const Vec3 n_hat = first.normal;
  const HalfEllipsoid unit_half(unit, n_hat);
  auto half_at = [&](double s) { return half_shadow_with_radius(obstacle, s * s, n_hat); };
  auto half_support = [&](const Vec3& u) { return u.dot(unit_half.support(u)); };

  ShadowContact& second = cert.second;
  const Probe half_max = probe(bodies, half_at(s_max), q, options.contact_tolerance, warm);
  if (!half_max.hit) {
    second.eps = eps_tol;
    second.squared_radius = c_max;
  } else {
    const Probe half_lo = probe(bodies, half_at(r1.s), q, options.contact_tolerance, warm);
    if (half_lo.hit) throw NumericalError("half shadow touches the robot where the full shadow does not");
    const SearchResult r2 = search_contact(bodies, r1.s, half_lo, s_max, half_at, half_support, dof, options, q, warm);
    const ConvexBody& body2 = bodies[static_cast<std::size_t>(r2.at.body)].body;
    second.touching = true;
    second.link = bodies[static_cast<std::size_t>(r2.at.body)].link;
    second.robot_point = r2.at.robot_point;
    const Vec3 loose_support = HalfEllipsoid(unit.with_squared_radius(r2.s * r2.s), n_hat).support(-r2.at.normal);
    second.on_cut = n_hat.dot(loose_support) <= 1e-9 * loose_support.norm();
    const auto w2 = second.on_cut ? std::nullopt : matching_contact(body2, obstacle, q, r2.s, &n_hat);
    second.normal = w2 ? Vec3(-unit.inverse_times(w2->displacement).normalized()) : r2.at.normal;
    const double s2 = extrapolate(body2, half_at(r2.s), r2.s, r2.s_hi, r2.at.others_lower, second.normal,
                                  half_support(-second.normal), sigma_max);
    second.squared_radius = s2 * s2;
    second.eps = stats::chi2_sf(second.squared_radius, dof);
    second.support_vector =
        w2 ? Vec3((s2 / w2->radius) * w2->displacement)
           : HalfEllipsoid(unit.with_squared_radius(second.squared_radius), n_hat).support(-second.normal);
    second.gap = r2.at.gap - (s2 - r2.s) * half_support(-second.normal);
  }

  cert.eps1 = first.eps;
  cert.eps2 = std::min(second.eps, cert.eps1);
  cert.eps_prime = 0.5 * (cert.eps1 + cert.eps2);
  cert.contact_normal = n_hat;
  cert.contact_vector1 = first.support_vector;
  cert.contact_vector2 = second.support_vector;
  cert.link_index = first.link;
  cert.contact_point = first.robot_point;
  return cert;
}

RiskCertificate certify_risk(const RobotModel& robot, const JointState& theta, const UncertainObstacle& obstacle,
                             const CertifyOptions& options) {
  const auto poses = kinematics::forward_kinematics(robot, theta);
  return certify_risk(kinematics::posed_bodies(robot, poses), obstacle, options);
}

RiskCertificate certify_risk(const RobotModel& robot, const JointState& theta, const UncertainObstacle& obstacle,
                             double eps_tol) {
  CertifyOptions opt;
  opt.eps_tol = eps_tol;
  return certify_risk(robot, theta, obstacle, opt);
}

Eigen::VectorXd contact_gradient(const ShadowContact& contact, const RobotModel& robot, const JointState& theta,
                                 const UncertainObstacle& obstacle) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(robot.dof());
  if (!contact.touching) return grad;
  const auto poses = kinematics::forward_kinematics(robot, theta);
  const auto jac = kinematics::point_jacobian(robot, poses, contact.link, contact.robot_point);
  const Vec3 w = obstacle.unit_ellipsoid().inverse_times(contact.support_vector);
  const double density = stats::chi2_pdf(contact.squared_radius, stats::Dof(obstacle.dim()));
  grad = -density * 2.0 * (w.transpose() * jac).transpose();
  return grad;
}

Eigen::VectorXd risk_gradient(const RiskCertificate& cert, const RobotModel& robot, const JointState& theta,
                              const UncertainObstacle& obstacle) {
  if (cert.saturated) throw DomainError("risk gradient is undefined for a saturated certificate");
  return 0.5 * (contact_gradient(cert.first, robot, theta, obstacle) + contact_gradient(cert.second, robot, theta, obstacle));
}

RiskLinearization linearize_risk(const RiskCertificate& cert, const Eigen::VectorXd& gradient, const JointState& theta0) {
  if (gradient.size() != theta0.size()) throw DomainError("gradient and anchor sizes differ");
  return {cert.eps_prime, gradient, theta0};
}

SceneRisk scene_risk(const RobotModel& robot, const JointState& theta, const std::vector<UncertainObstacle>& obstacles,
                     const CertifyOptions& options) {
  SceneRisk out;
  const auto bodies = kinematics::posed_bodies(robot, kinematics::forward_kinematics(robot, theta));
  for (const auto& o : obstacles) {
    out.certificates.push_back(certify_risk(bodies, o, options));
    out.total += out.certificates.back().eps_prime;
  }
  return out;
}

SceneRisk scene_risk(const RobotModel& robot, const JointState& theta, const std::vector<UncertainObstacle>& obstacles,
                     double eps_tol) {
  CertifyOptions opt;
  opt.eps_tol = eps_tol;
  return scene_risk(robot, theta, obstacles, opt);
}

}  // namespace ccopt::risk
