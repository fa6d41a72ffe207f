#include <cmath>
#include <random>

#include "../support/qp_oracle.hpp"
#include "ccopt/error.hpp"
#include "ccopt/qp.hpp"
#include "doctest.h"

using namespace ccopt;
using namespace ccopt::qp;

namespace {

QuadraticProgram least_squares(const VectorXd& target) {
  QuadraticProgram qp(static_cast<int>(target.size()));
  qp.hessian = 2.0 * MatrixXd::Identity(target.size(), target.size());
  qp.linear = -2.0 * target;
  return qp;
}

}  // namespace

TEST_CASE("unconstrained minimum of a squared norm") {
  QuadraticProgram qp(3);
  qp.hessian = MatrixXd::Identity(3, 3);
  const auto sol = solve_qp(qp);
  CHECK(sol.status == Status::Optimal);
  CHECK(sol.z.isZero());
  CHECK(sol.objective == 0.0);
}

TEST_CASE("single active inequality") {
  auto qp = least_squares(VectorXd::Ones(1));
  qp.add_inequality(VectorXd::Ones(1), 0.0);
  const auto sol = solve_qp(qp);
  REQUIRE(sol.status == Status::Optimal);
  CHECK(std::abs(sol.z[0]) <= 1e-12);
  // (z - 1)^2 = z^2 - 2z + 1; the constant is not part of the program.
  CHECK(sol.objective + 1.0 == doctest::Approx(1.0));
  CHECK(sol.ineq_multipliers[0] == doctest::Approx(2.0));
}

TEST_CASE("projection onto a half-plane") {
  auto qp = least_squares(VectorXd::Constant(2, 2.0));
  qp.add_inequality(VectorXd::Ones(2), 2.0);
  const auto sol = solve_qp(qp);
  REQUIRE(sol.status == Status::Optimal);
  CHECK((sol.z - VectorXd::Ones(2)).norm() <= 1e-12);
  // KKT by hand: 2(z - 2) + lambda = 0 at z = 1 gives lambda = 2.
  CHECK(sol.ineq_multipliers[0] == doctest::Approx(2.0));
  CHECK(sol.residuals.max() <= 1e-12);
}

TEST_CASE("equalities and bounds") {
  auto qp = least_squares((VectorXd(3) << 3, -1, 0.5).finished());
  qp.add_equality((VectorXd(3) << 1, 1, 1).finished(), 1.0);
  qp.lower = VectorXd::Constant(3, -0.25);
  qp.upper = VectorXd::Constant(3, 1.0);
  const auto sol = solve_qp(qp);
  REQUIRE(sol.status == Status::Optimal);
  CHECK(std::abs(sol.z.sum() - 1.0) <= 1e-12);
  CHECK(sol.z[0] == doctest::Approx(1.0));
  CHECK(sol.z[1] == doctest::Approx(-0.25));
  CHECK(sol.z[2] == doctest::Approx(0.25));
  CHECK(sol.residuals.max() <= 1e-10);
  CHECK(sol.upper_multipliers[0] > 0.0);
  CHECK(sol.lower_multipliers[1] > 0.0);
}

TEST_CASE("contradictory constraints are reported infeasible") {
  auto qp = least_squares(VectorXd::Zero(1));
  qp.add_inequality(VectorXd::Ones(1), 0.0);
  qp.add_inequality(-VectorXd::Ones(1), -1.0);
  CHECK(solve_qp(qp).status == Status::Infeasible);

  auto boxed = least_squares(VectorXd::Zero(2));
  boxed.lower = VectorXd::Constant(2, 1.0);
  boxed.upper = VectorXd::Constant(2, 0.0);
  CHECK(solve_qp(boxed).status == Status::Infeasible);

  auto eq = least_squares(VectorXd::Zero(2));
  eq.add_equality((VectorXd(2) << 1, 1).finished(), 1.0);
  eq.add_equality((VectorXd(2) << 2, 2).finished(), 3.0);
  CHECK(solve_qp(eq).status == Status::Infeasible);

  auto redundant = least_squares(VectorXd::Zero(2));
  redundant.add_equality((VectorXd(2) << 1, 1).finished(), 1.0);
  redundant.add_equality((VectorXd(2) << 2, 2).finished(), 2.0);
  const auto ok = solve_qp(redundant);
  CHECK(ok.status == Status::Optimal);
  CHECK((ok.z - VectorXd::Constant(2, 0.5)).norm() <= 1e-12);
}

TEST_CASE("malformed programs are rejected") {
  QuadraticProgram qp(2);
  qp.hessian << 1, 0, 0, -1;
  CHECK_THROWS_AS(solve_qp(qp), DomainError);

  QuadraticProgram asym(2);
  asym.hessian << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(solve_qp(asym), DomainError);

  QuadraticProgram bad(2);
  bad.hessian = MatrixXd::Identity(2, 2);
  bad.lower = VectorXd::Zero(3);
  CHECK_THROWS_AS(solve_qp(bad), DomainError);
  CHECK_THROWS_AS(bad.add_inequality(VectorXd::Ones(3), 1.0), DomainError);
}

TEST_CASE("singular hessians are regularized and flagged") {
  QuadraticProgram qp(2);
  qp.hessian(0, 0) = 2.0;
  qp.linear << -2.0, 1.0;
  qp.lower = VectorXd::Constant(2, -1.0);
  qp.upper = VectorXd::Constant(2, 1.0);
  const auto sol = solve_qp(qp);
  REQUIRE(sol.status == Status::Optimal);
  CHECK(sol.regularized);
  CHECK(sol.z[0] == doctest::Approx(1.0));
  CHECK(sol.z[1] == doctest::Approx(-1.0));
}

TEST_CASE("iteration limit is reported") {
  auto qp = least_squares(VectorXd::Constant(3, 2.0));
  for (int i = 0; i < 3; ++i) qp.add_inequality(VectorXd::Unit(3, i), 0.0);
  const auto sol = solve_qp(qp, QPOptions{.max_iterations = 1});
  CHECK(sol.status == Status::IterationLimit);
}

TEST_CASE("warm starts give the same solution") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    auto r = qporacle::random_feasible_qp(rng, 3 + trial % 10);
    const auto cold = solve_qp(r.qp);
    REQUIRE(cold.status == Status::Optimal);
    const auto warm = solve_qp(r.qp, {}, &cold.active);
    REQUIRE(warm.status == Status::Optimal);
    CHECK((warm.z - cold.z).norm() <= 1e-8 * (1.0 + cold.z.norm()));
    CHECK(warm.iterations <= cold.iterations);
  }
}

TEST_CASE("random programs agree with a dual projected-gradient oracle") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> dim(1, 20);
  for (int trial = 0; trial < 60; ++trial) {
    auto r = qporacle::random_feasible_qp(rng, dim(rng));
    const auto sol = solve_qp(r.qp);
    REQUIRE(sol.status == Status::Optimal);
    CHECK(sol.residuals.max() <= 1e-6);
    const auto oracle = qporacle::dual_ascent(r.qp);
    // Weak duality makes the oracle value a lower bound.
    CHECK(sol.objective >= oracle.value - 1e-9 * (1.0 + std::abs(oracle.value)));
    CHECK(std::abs(sol.objective - oracle.value) <= 1e-5);
    CHECK(sol.objective <= r.qp.objective(r.feasible) + 1e-12);
  }
}
