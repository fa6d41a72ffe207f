#include <algorithm>
#include <cmath>

#include "../support/robots.hpp"
#include "ccopt/error.hpp"
#include "ccopt/scora.hpp"
#include "doctest.h"

using namespace ccopt;
using namespace ccopt::scora;
using geometry::ConvexBody;
using geometry::Mat3;
using geometry::Vec3;

namespace {

Mat3 planar_cov(double sx, double sy, double sxy = 0.0) {
  Mat3 m = Mat3::Zero();
  m(0, 0) = sx;
  m(1, 1) = sy;
  m(0, 1) = m(1, 0) = sxy;
  return m;
}

JointState q2(double x, double y) { return (JointState(2) << x, y).finished(); }

TrajectoryProblem planar_problem(double radius, int T, JointState start, JointState goal) {
  TrajectoryProblem p{testbots::planar_mover(radius)};
  p.timesteps = T;
  p.start = std::move(start);
  p.goal = std::move(goal);
  return p;
}

// Point robot sliding past a point obstacle whose position is isotropic Gaussian.
TrajectoryProblem point_pass(double sigma, double delta) {
  auto p = planar_problem(0.0, 9, q2(-1.0, 0.0), q2(1.0, 0.0));
  p.obstacles.emplace_back(ConvexBody::point(Vec3(0.0, 0.1, 0.0)), planar_cov(sigma * sigma, sigma * sigma), 2);
  p.risk_budget = delta;
  return p;
}

// Two boxes forming a gap the straight line passes through, with correlated covariances.
TrajectoryProblem gap_problem() {
  auto p = planar_problem(0.05, 10, q2(-2.0, 0.0), q2(2.3, 0.1));
  p.obstacles.emplace_back(ConvexBody::box(Vec3(0.3, 0.5, 0.0)).translated(Vec3(0.0, 0.85, 0.0)),
                           planar_cov(0.004, 0.012, 0.002), 2);
  p.obstacles.emplace_back(ConvexBody::box(Vec3(0.3, 0.5, 0.0)).translated(Vec3(0.0, -0.85, 0.0)),
                           planar_cov(0.002, 0.004, -0.001), 2);
  p.risk_budget = 0.01;
  p.margin = 0.02;
  return p;
}

double straight_objective(const TrajectoryProblem& p) {
  return (p.goal - p.start).squaredNorm() / (p.timesteps - 1);
}

}  // namespace

TEST_CASE("seed trajectories interpolate the endpoints") {
  auto p = planar_problem(0.0, 2, q2(0, 0), q2(1, 1));
  const auto two = seed_trajectory(p);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == p.start);
  CHECK(two[1] == p.goal);

  p.timesteps = 3;
  const auto three = seed_trajectory(p);
  CHECK(three[1].isApprox(q2(0.5, 0.5)));

  p.timesteps = 7;
  p.goal = q2(0.3, -1.2);
  const auto seven = seed_trajectory(p);
  for (std::size_t t = 2; t < seven.size(); ++t) {
    CHECK((seven[t] - seven[t - 1] - (seven[1] - seven[0])).norm() <= 1e-14);
  }
  CHECK(seven.back() == p.goal);
  p.risk_budget = 0.07;
  CHECK(uniform_allocation(p).isApprox(Eigen::VectorXd::Constant(7, 0.01)));
}

TEST_CASE("malformed problems are rejected") {
  auto p = planar_problem(0.0, 1, q2(0, 0), q2(1, 1));
  CHECK_THROWS_AS(p.validate(), DomainError);
  p.timesteps = 4;
  p.risk_budget = 1.0;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p.risk_budget = 0.1;
  p.margin = -0.1;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p.margin = 0.0;
  p.start = JointState::Zero(3);
  CHECK_THROWS_AS(p.validate(), DomainError);
  p.start = q2(20.0, 0.0);
  CHECK_THROWS_AS(p.validate(), DomainError);
  p.start = q2(0, 0);
  CHECK_NOTHROW(p.validate());
  SCOConfig bad;
  bad.mu_growth = 1.0;
  CHECK_THROWS_AS(solve(p, bad), DomainError);
}

TEST_CASE("obstacle-free problems return the straight line") {
  auto p = planar_problem(0.1, 6, q2(-1, 0.5), q2(2, -0.5));
  const auto seed = seed_trajectory(p);
  const auto qp = convexify(p, seed, uniform_allocation(p), 0.3, 10.0);
  const auto sol = qp::solve_qp(qp);
  REQUIRE(sol.status == qp::Status::Optimal);
  for (int t = 1; t + 1 < p.timesteps; ++t) CHECK((sol.z.segment((t - 1) * 2, 2) - seed[t]).norm() <= 1e-9);

  for (bool with_risk : {true, false}) {
    SCOConfig cfg;
    cfg.risk_constraints = with_risk;
    const auto r = solve(p, cfg);
    CHECK(r.status == Status::Converged);
    CHECK(r.objective == doctest::Approx(straight_objective(p)).epsilon(1e-12));
    CHECK(r.path_length == doctest::Approx((p.goal - p.start).norm()).epsilon(1e-12));
    CHECK(r.violations.max_violation == 0.0);
    for (int t = 0; t < p.timesteps; ++t) CHECK((r.trajectory[t] - seed[t]).norm() <= 1e-9);
  }
}

TEST_CASE("a violated risk row pushes the state along its escape direction") {
  TrajectoryProblem p{testbots::slider()};
  p.timesteps = 3;
  p.start = JointState::Constant(1, -0.5);
  p.goal = JointState::Constant(1, -0.5);
  p.risk_budget = 0.01;
  p.obstacles.emplace_back(ConvexBody::point(Vec3(0.3, 1.0, 0.0)), planar_cov(1.0, 1.0), 2);
  const auto seed = seed_trajectory(p);
  const auto qp = convexify(p, seed, uniform_allocation(p), 0.3, 10.0);
  // Rows: one risk row per timestep then the allocation row; no signed-distance rows.
  REQUIRE(qp.b_ineq.size() == 4);
  // Moving right approaches the obstacle, so the row's joint coefficient is positive.
  CHECK(qp.a_ineq(1, 0) > 0.0);
  const auto sol = qp::solve_qp(qp);
  REQUIRE(sol.status == qp::Status::Optimal);
  CHECK(sol.z[0] < -0.5 - 0.1);
}

TEST_CASE("saturated pairs keep the distance row but lose their risk term") {
  auto p = planar_problem(0.05, 3, q2(-1, 0), q2(1, 0));
  p.obstacles.emplace_back(ConvexBody::box(Vec3(0.2, 0.2, 0.0)), planar_cov(0.01, 0.01), 2);
  p.margin = 0.05;
  const auto seed = seed_trajectory(p);
  const auto qp = convexify(p, seed, uniform_allocation(p), 0.3, 10.0);
  // One distance row at the interior step, three risk rows, one allocation row.
  REQUIRE(qp.b_ineq.size() == 5);
  CHECK(qp.a_ineq.row(0).head(2).norm() > 0.5);
  CHECK(qp.a_ineq.row(2).head(2).isZero());
  CHECK(qp.b_ineq[2] == doctest::Approx(0.0));
}

TEST_CASE("constraint evaluation") {
  auto p = planar_problem(0.05, 5, q2(-1, 0), q2(1, 0));
  p.obstacles.emplace_back(ConvexBody::box(Vec3(0.2, 0.2, 0.0)), planar_cov(0.01, 0.01), 2);
  p.margin = 0.05;
  p.risk_budget = 0.02;
  const auto seed = seed_trajectory(p);
  const Eigen::VectorXd alloc = Eigen::VectorXd::Constant(5, 1.5 * p.risk_budget / 5);
  const auto rep = evaluate_constraints(p, seed, alloc);
  CHECK(rep.allocation_residual == doctest::Approx(0.5 * p.risk_budget));
  CHECK(rep.pair_risk(2, 0) == 1.0);
  // The robot sphere is centered inside the box: depth 0.2 + radius.
  CHECK(rep.signed_distance(2, 0) == doctest::Approx(-0.25));
  CHECK(rep.margin_violation(2, 0) == doctest::Approx(0.3));
  CHECK(rep.max_violation >= 0.3);
  CHECK(rep.total_risk == doctest::Approx(rep.timestep_risk.sum()));
  CHECK_THROWS_AS(evaluate_constraints(p, seed, Eigen::VectorXd::Zero(3)), DomainError);
}

TEST_CASE("certified plan past a point obstacle matches the exponential risk curve") {
  const double sigma = 0.15;
  const auto p = point_pass(sigma, 0.01);
  const auto r = solve(p);
  REQUIRE(r.status == Status::Converged);
  const Vec3 center(0.0, 0.1, 0.0);
  double closed_form_total = 0.0;
  for (int t = 0; t < p.timesteps; ++t) {
    const auto& th = r.trajectory[static_cast<std::size_t>(t)];
    const double r2 = (th[0] - center.x()) * (th[0] - center.x()) + (th[1] - center.y()) * (th[1] - center.y());
    // Full shadow exp(-r^2 / 2 sigma^2), half shadow at eps_tol, averaged.
    const double expected = 0.5 * (std::exp(-r2 / (2 * sigma * sigma)) + 1e-6);
    CHECK(std::abs(r.timestep_risk[t] - expected) <= 1e-6);
    closed_form_total += expected;
  }
  CHECK(closed_form_total <= p.risk_budget + 1e-6);
  CHECK(r.violations.total_risk <= p.risk_budget + 1e-6);
  CHECK(r.allocation.sum() <= p.risk_budget + 1e-12);
  CHECK(r.allocation.minCoeff() >= 0.0);
  CHECK(r.violations.max_violation <= 1e-4);
  // The straight line passes within 0.1 of the obstacle, so the plan must bend.
  CHECK(r.objective > straight_objective(p));
}

TEST_CASE("allocation spends the most risk at the closest approach") {
  const auto p = gap_problem();
  const auto r = solve(p);
  REQUIRE(r.status == Status::Converged);
  const auto rep = evaluate_constraints(p, r.trajectory, r.allocation);
  Eigen::Index closest = 0;
  Eigen::Index peak = 0;
  rep.signed_distance.rowwise().minCoeff().minCoeff(&closest);
  r.allocation.maxCoeff(&peak);
  CHECK(peak == closest);
  CHECK(r.allocation[peak] > 10.0 * r.allocation.minCoeff());
}

TEST_CASE("planner invariants on the gap scene") {
  const auto p = gap_problem();
  const auto r = solve(p);
  REQUIRE(r.status == Status::Converged);
  CHECK(r.trajectory.front() == p.start);
  CHECK(r.trajectory.back() == p.goal);
  CHECK(r.violations.total_risk <= p.risk_budget + 1e-6);
  CHECK(r.allocation.sum() <= p.risk_budget + 1e-12);
  CHECK(r.allocation.minCoeff() >= 0.0);
  CHECK(r.objective >= straight_objective(p) - 1e-12);
  // Fresh certification agrees with the stored report.
  const auto again = evaluate_constraints(p, r.trajectory, r.allocation);
  CHECK(again.total_risk == r.violations.total_risk);
  CHECK(again.max_violation <= 1e-4);

  // Accepted steps never raise the merit while the penalty weight is fixed.
  double last = INFINITY;
  int outer = -1;
  for (const auto& rec : r.log) {
    if (rec.outer != outer) {
      outer = rec.outer;
      last = INFINITY;
    }
    if (!rec.accepted) continue;
    CHECK(rec.merit <= last + 1e-12);
    last = rec.merit;
  }

  SCOConfig blind;
  blind.risk_constraints = false;
  const auto b = solve(p, blind);
  REQUIRE(b.status == Status::Converged);
  CHECK(b.violations.max_margin_violation <= 1e-4);
  CHECK(b.objective <= r.objective + 1e-9);
  CHECK(b.violations.total_risk > p.risk_budget);
}

TEST_CASE("arm plan around an uncertain sphere") {
  TrajectoryProblem p{testbots::arm3()};
  p.timesteps = 12;
  p.start = (JointState(3) << -1.2, 0.3, 0.6).finished();
  p.goal = (JointState(3) << 1.2, 0.3, 0.6).finished();
  Mat3 cov = Mat3::Identity() * 0.0009;
  cov(2, 2) = 0.0004;
  p.obstacles.emplace_back(ConvexBody::sphere(Vec3(0.6, 0.0, 0.05), 0.08), cov, 3);
  p.risk_budget = 0.05;
  p.margin = 0.01;
  const auto r = solve(p);
  REQUIRE(r.status == Status::Converged);
  CHECK(r.violations.total_risk <= p.risk_budget + 1e-6);
  CHECK(r.violations.max_margin_violation <= 1e-4);
  CHECK(r.trajectory.front() == p.start);
  CHECK(r.trajectory.back() == p.goal);
}

TEST_CASE("endpoint collisions are infeasible") {
  auto p = planar_problem(0.05, 5, q2(0, 0), q2(1, 0));
  p.obstacles.emplace_back(ConvexBody::box(Vec3(0.2, 0.2, 0.0)), planar_cov(0.01, 0.01), 2);
  const auto r = solve(p);
  CHECK(r.status == Status::Infeasible);
  CHECK(r.trajectory.front() == p.start);
  CHECK(r.violations.margin_violation(0, 0) > 0.0);
  CHECK_FALSE(r.message.empty());
}

TEST_CASE("a budget below the unavoidable risk ends infeasible") {
  // Joint limits keep every state close to the obstacle; the endpoints alone fit the budget.
  std::vector<kinematics::Joint> joints = {testbots::prismatic(Vec3::UnitX(), -0.3, 0.3),
                                           testbots::prismatic(Vec3::UnitY(), -0.01, 0.01)};
  std::vector<kinematics::Link> links(2);
  links[1].shapes.push_back(ConvexBody::point(Vec3::Zero()));
  TrajectoryProblem p{kinematics::RobotModel(geometry::Pose::identity(), kinematics::Link{}, joints, links)};
  p.timesteps = 4;
  p.start = q2(-0.3, 0);
  p.goal = q2(0.3, 0);
  p.obstacles.emplace_back(ConvexBody::point(Vec3(0.0, 0.5, 0.0)), planar_cov(0.09, 0.09), 2);
  p.risk_budget = 0.2;
  SCOConfig cfg;
  cfg.mu_max = 1e3;
  const auto r = solve(p, cfg);
  CHECK(r.status == Status::Infeasible);
  CHECK(r.trajectory.front() == p.start);
  CHECK(r.trajectory.back() == p.goal);
  CHECK(r.violations.total_risk > p.risk_budget);
}
