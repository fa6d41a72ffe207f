#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

// Dense convex quadratic programs
//
//   minimize   1/2 z^T H z + f^T z
//   subject to A z <= b,  C z = d,  lower <= z <= upper
//
// solved with the Goldfarb-Idnani dual active-set method.

namespace ccopt::qp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct QuadraticProgram {
  MatrixXd hessian;
  VectorXd linear;
  MatrixXd a_ineq;  // rows: A z <= b
  VectorXd b_ineq;
  MatrixXd a_eq;  // rows: C z = d
  VectorXd b_eq;
  /// Box bounds; empty means unbounded, infinite entries are skipped.
  VectorXd lower;
  VectorXd upper;

  explicit QuadraticProgram(int n = 0);
  int size() const { return static_cast<int>(linear.size()); }
  double objective(const VectorXd& z) const { return 0.5 * z.dot(hessian * z) + linear.dot(z); }

  /// Appends a_row^T z <= b and returns the row index.
  int add_inequality(const VectorXd& a_row, double b);
  int add_equality(const VectorXd& c_row, double d);
};

enum class Status { Optimal, Infeasible, IterationLimit };
std::string to_string(Status s);

struct QPOptions {
  /// 0 picks a limit from the problem size.
  int max_iterations = 0;
  /// Constraint violation (in constraint units, scaled by the row norm) treated as satisfied.
  double feasibility_tolerance = 1e-10;
};

/// Constraint indices into a combined numbering: inequality rows first, then
/// lower bounds (offset m), then upper bounds (offset m + n).
struct ActiveSet {
  std::vector<int> constraints;
};

struct KKTResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double max() const;
};

struct QPSolution {
  VectorXd z;
  double objective = 0.0;
  Status status = Status::Infeasible;
  /// Nonnegative multipliers of A z <= b, lower and upper bounds; free
  /// multipliers of C z = d. Stationarity reads
  /// H z + f + A^T lambda + C^T nu - mu_lower + mu_upper = 0.
  VectorXd ineq_multipliers;
  VectorXd eq_multipliers;
  VectorXd lower_multipliers;
  VectorXd upper_multipliers;
  bool regularized = false;
  double regularization = 0.0;
  int iterations = 0;
  ActiveSet active;
  KKTResiduals residuals;
  std::string message;
};

/// Throws DomainError on indefinite H or inconsistent dimensions. A warm
/// start only orders which violated constraints enter first, so it never
/// changes the solution, just the work.
QPSolution solve_qp(const QuadraticProgram& qp, const QPOptions& options = {}, const ActiveSet* warm_start = nullptr);

KKTResiduals kkt_residuals(const QuadraticProgram& qp, const QPSolution& sol);

}  // namespace ccopt::qp
