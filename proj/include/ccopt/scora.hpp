#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccopt/kinematics.hpp"
#include "ccopt/qp.hpp"
#include "ccopt/risk.hpp"

// Chance-constrained trajectory optimization with risk allocation.
//
//   minimize   sum_t |theta_t - theta_{t-1}|^2
//   subject to sd_O(theta_t) >= d_margin                 for every t, O
//              sum_O eps_O(theta_t) <= delta_t           for every t
//              sum_t delta_t <= Delta,  delta_t >= 0
//
// solved by sequential convex optimization: an exact l1 penalty on the
// linearized constraints inside a trust region, with the penalty weight
// raised until the true constraints hold.

namespace ccopt::scora {

using kinematics::JointState;
using kinematics::RobotModel;
using risk::UncertainObstacle;

using Trajectory = std::vector<JointState>;

struct TrajectoryProblem {
  RobotModel robot;
  std::vector<UncertainObstacle> obstacles;
  int timesteps = 10;
  JointState start;
  JointState goal;
  double risk_budget = 0.01;  // Delta
  double margin = 0.0;        // d_margin (m)
  /// Optional per-(timestep, obstacle) margins overriding `margin`
  /// (timesteps x obstacles); empty means uniform.
  Eigen::MatrixXd pair_margins;

  /// Throws DomainError when the problem is malformed.
  void validate() const;
  double margin_for(int t, int obstacle) const;
};

enum class Status { Converged, Infeasible, IterationLimit };
std::string to_string(Status s);

struct SCOConfig {
  double mu_initial = 10.0;
  double mu_growth = 10.0;
  double mu_max = 1e6;
  double trust_radius = 0.3;  // rad (m for prismatic joints)
  double trust_expand = 1.5;
  double trust_shrink = 0.25;
  double trust_min = 1e-4;
  double trust_max = 2.0;
  double constraint_tolerance = 1e-4;
  double objective_tolerance = 1e-4;
  double improve_ratio = 0.25;
  int max_outer = 8;
  int max_inner = 60;
  double eps_tol = 1e-6;
  /// Pairs farther than margin + this distance get no signed-distance row.
  double activation_distance = 0.15;
  /// The QP plans against (1 - backoff) * Delta so that linearization error
  /// does not leave the certified total just above the budget.
  double budget_backoff = 2e-3;
  /// Impose the risk rows and the allocation row. False gives the
  /// deterministic planner used by the baselines.
  bool risk_constraints = true;
  /// Starting trajectory; the straight line when absent.
  std::optional<Trajectory> seed;
};

struct IterationRecord {
  int iteration = 0;
  int outer = 0;
  double mu = 0.0;
  double radius = 0.0;
  double objective = 0.0;
  double max_violation = 0.0;
  double sum_delta = 0.0;
  double merit = 0.0;
  double ratio = 0.0;
  bool accepted = false;
};

struct ViolationReport {
  /// Signed distance per (timestep, obstacle), minimized over robot bodies.
  Eigen::MatrixXd signed_distance;
  /// Certified eps_prime per (timestep, obstacle); 1 when saturated.
  Eigen::MatrixXd pair_risk;
  Eigen::VectorXd timestep_risk;  // sum over obstacles
  Eigen::MatrixXd margin_violation;
  Eigen::VectorXd risk_violation;  // max(0, timestep_risk - delta_t)
  double allocation_residual = 0.0;  // sum delta - Delta (may be negative)
  double negative_allocation = 0.0;
  double total_risk = 0.0;
  double max_margin_violation = 0.0;
  double max_violation = 0.0;
};

struct PlanResult {
  Trajectory trajectory;
  Eigen::VectorXd allocation;
  Status status = Status::IterationLimit;
  Eigen::VectorXd timestep_risk;
  double objective = 0.0;
  double path_length = 0.0;
  double runtime_seconds = 0.0;
  ViolationReport violations;
  std::vector<IterationRecord> log;
  int qp_solves = 0;
  std::string message;
};

Trajectory seed_trajectory(const TrajectoryProblem& problem);
Eigen::VectorXd uniform_allocation(const TrajectoryProblem& problem);

double trajectory_objective(const Trajectory& traj);
double path_length(const Trajectory& traj);

/// The quadratic subproblem at `current` with trust radius and penalty
/// weight. Variables: interior joint states, then allocations (scaled by
/// 1/Delta), then one slack per constraint row.
qp::QuadraticProgram convexify(const TrajectoryProblem& problem, const Trajectory& current,
                               const Eigen::VectorXd& allocation, double trust_radius, double mu,
                               const SCOConfig& config = {});

PlanResult solve(const TrajectoryProblem& problem, const SCOConfig& config = {});

ViolationReport evaluate_constraints(const TrajectoryProblem& problem, const Trajectory& traj,
                                     const Eigen::VectorXd& allocation, double eps_tol = 1e-6);

}  // namespace ccopt::scora
