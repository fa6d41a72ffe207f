#include "ccopt/scora.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "ccopt/error.hpp"

namespace ccopt::scora {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using geometry::Vec3;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Tie-breaking curvature on the scaled allocations and on the slacks; both
// keep the QP Hessian positive definite without moving its solution much.
constexpr double kAllocationProximal = 1e-2;
constexpr double kSlackCurvature = 1.0;

struct SdRow {
  int obstacle = 0;
  double sd = 0.0;
  double margin = 0.0;
  VectorXd grad;
};

struct PairRisk {
  double risk = 0.0;
  bool saturated = false;
  VectorXd grad;
};

// Constraint values (and gradients for interior steps) at one configuration.
struct StepData {
  JointState theta;
  bool has_risk = false;
  std::vector<SdRow> rows;
  VectorXd sd_min;
  double sd_penalty = 0.0;
  std::vector<PairRisk> risk;
  double risk_sum = 0.0;
};

struct Evaluation {
  Trajectory traj;
  std::vector<StepData> steps;
  double objective = 0.0;
};

double lower_distance_bound(const geometry::ConvexBody& a, const geometry::ConvexBody& b, int dim) {
  Vec3 d = b.center() - a.center();
  if (dim == 2) d.z() = 0.0;
  return d.norm() - a.bounding_radius() - b.bounding_radius();
}

StepData evaluate_step(const TrajectoryProblem& problem, int t, const JointState& theta, const SCOConfig& config,
                       bool with_risk, bool with_grad) {
  StepData s;
  s.theta = theta;
  s.has_risk = with_risk;
  const RobotModel& robot = problem.robot;
  const auto poses = kinematics::forward_kinematics(robot, theta);
  const auto bodies = kinematics::posed_bodies(robot, poses);
  const int n_obs = static_cast<int>(problem.obstacles.size());
  s.sd_min = VectorXd::Constant(n_obs, kInf);
  risk::CertifyOptions copt;
  copt.eps_tol = config.eps_tol;

  for (int o = 0; o < n_obs; ++o) {
    const UncertainObstacle& obs = problem.obstacles[static_cast<std::size_t>(o)];
    const double m = problem.margin_for(t, o);
    geometry::QueryOptions q;
    q.dim = obs.dim();
    for (const auto& b : bodies) {
      const double lower = lower_distance_bound(b.body, obs.nominal(), q.dim);
      double sd = lower;
      if (lower <= m + config.activation_distance) {
        const auto d = geometry::distance(b.body, obs.nominal(), q);
        sd = d.signed_distance;
        if (with_grad && b.link > 0 && sd < m + config.activation_distance) {
          const auto jac = kinematics::point_jacobian(robot, poses, b.link, d.witness_a);
          VectorXd g = -(d.normal.transpose() * jac).transpose();
          if (g.squaredNorm() > 0.0) s.rows.push_back({o, sd, m, std::move(g)});
        }
      }
      s.sd_min[o] = std::min(s.sd_min[o], sd);
      s.sd_penalty += std::max(0.0, m - sd);
    }
    if (with_risk) {
      const auto cert = risk::certify_risk(bodies, obs, copt);
      PairRisk pr;
      pr.saturated = cert.saturated;
      pr.risk = cert.saturated ? 1.0 : cert.eps_prime;
      if (with_grad && !cert.saturated) pr.grad = risk::risk_gradient(cert, robot, theta, obs);
      s.risk_sum += pr.risk;
      s.risk.push_back(std::move(pr));
    }
  }
  return s;
}

Evaluation evaluate_all(const TrajectoryProblem& problem, const Trajectory& traj, const SCOConfig& config,
                        bool with_risk, const Evaluation* previous) {
  Evaluation e;
  e.traj = traj;
  e.objective = trajectory_objective(traj);
  const int T = problem.timesteps;
  e.steps.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const auto& theta = traj[static_cast<std::size_t>(t)];
    if (previous) {
      const StepData& p = previous->steps[static_cast<std::size_t>(t)];
      if (p.has_risk == with_risk && p.theta == theta) {
        e.steps.push_back(p);
        continue;
      }
    }
    const bool interior = t > 0 && t < T - 1;
    e.steps.push_back(evaluate_step(problem, t, theta, config, with_risk, interior));
  }
  return e;
}

double risk_violation(const Evaluation& e, const VectorXd& a, double budget, double backoff) {
  double v = 0.0;
  for (std::size_t t = 0; t < e.steps.size(); ++t) v += std::max(0.0, e.steps[t].risk_sum / budget - a[static_cast<Eigen::Index>(t)]);
  v += std::max(0.0, a.sum() - (1.0 - backoff));
  return v;
}

double merit(const TrajectoryProblem& problem, const Evaluation& e, const VectorXd& a, double mu,
             const SCOConfig& config) {
  double viol = 0.0;
  for (std::size_t t = 1; t + 1 < e.steps.size(); ++t) viol += e.steps[t].sd_penalty;
  if (config.risk_constraints) viol += risk_violation(e, a, problem.risk_budget, config.budget_backoff);
  return e.objective + mu * viol;
}

// Largest margin shortfall over every timestep and obstacle.
double max_margin_violation(const TrajectoryProblem& problem, const Evaluation& e) {
  double worst = 0.0;
  for (std::size_t t = 0; t < e.steps.size(); ++t) {
    for (Eigen::Index o = 0; o < e.steps[t].sd_min.size(); ++o) {
      worst = std::max(worst, problem.margin_for(static_cast<int>(t), static_cast<int>(o)) - e.steps[t].sd_min[o]);
    }
  }
  return worst;
}

double total_risk(const Evaluation& e) {
  double r = 0.0;
  for (const auto& s : e.steps) r += s.risk_sum;
  return r;
}

struct Subproblem {
  qp::QuadraticProgram qp;
  VectorXd z0;  // current point with zero slacks
  int n_theta = 0;
  int n_alloc = 0;
  int n_slack = 0;
};

Subproblem build_subproblem(const TrajectoryProblem& problem, const Evaluation& e, const VectorXd& a0,
                            double radius, double mu, const SCOConfig& config) {
  const int T = problem.timesteps;
  const int dof = problem.robot.dof();
  const bool with_risk = config.risk_constraints;
  const double inv_budget = 1.0 / problem.risk_budget;

  int n_rows = 0;
  for (int t = 1; t < T - 1; ++t) n_rows += static_cast<int>(e.steps[static_cast<std::size_t>(t)].rows.size());
  if (with_risk) n_rows += T + 1;

  Subproblem sp;
  sp.n_theta = (T - 2) * dof;
  sp.n_alloc = with_risk ? T : 0;
  sp.n_slack = n_rows;
  const int n = sp.n_theta + sp.n_alloc + sp.n_slack;
  auto theta_index = [&](int t) { return (t - 1) * dof; };
  const int alloc0 = sp.n_theta;
  const int slack0 = sp.n_theta + sp.n_alloc;

  qp::QuadraticProgram& qp = sp.qp;
  qp = qp::QuadraticProgram(n);
  qp.lower = VectorXd::Constant(n, -kInf);
  qp.upper = VectorXd::Constant(n, kInf);
  sp.z0 = VectorXd::Zero(n);

  // Path objective sum |theta_t - theta_{t-1}|^2 with fixed endpoints.
  const JointState lo_lim = problem.robot.lower_limits();
  const JointState hi_lim = problem.robot.upper_limits();
  for (int t = 1; t < T - 1; ++t) {
    const int i = theta_index(t);
    const JointState& th = e.traj[static_cast<std::size_t>(t)];
    for (int j = 0; j < dof; ++j) {
      qp.hessian(i + j, i + j) = 4.0;
      if (t + 1 < T - 1) {
        qp.hessian(i + j, i + dof + j) = -2.0;
        qp.hessian(i + dof + j, i + j) = -2.0;
      }
      sp.z0[i + j] = th[j];
      qp.lower[i + j] = std::min(th[j], std::max(lo_lim[j], th[j] - radius));
      qp.upper[i + j] = std::max(th[j], std::min(hi_lim[j], th[j] + radius));
    }
    if (t == 1) qp.linear.segment(i, dof) -= 2.0 * e.traj.front();
    if (t == T - 2) qp.linear.segment(i, dof) -= 2.0 * e.traj.back();
  }
  for (int k = 0; k < sp.n_alloc; ++k) {
    qp.hessian(alloc0 + k, alloc0 + k) = kAllocationProximal;
    qp.linear[alloc0 + k] = -kAllocationProximal * a0[k];
    qp.lower[alloc0 + k] = 0.0;
    sp.z0[alloc0 + k] = a0[k];
  }
  for (int k = 0; k < sp.n_slack; ++k) {
    qp.hessian(slack0 + k, slack0 + k) = kSlackCurvature;
    qp.linear[slack0 + k] = mu;
    qp.lower[slack0 + k] = 0.0;
  }

  qp.a_ineq = MatrixXd::Zero(n_rows, n);
  qp.b_ineq = VectorXd::Zero(n_rows);
  int r = 0;
  // sd0 + g (theta - theta0) >= margin, as -g theta - s <= sd0 - margin - g theta0.
  for (int t = 1; t < T - 1; ++t) {
    const StepData& st = e.steps[static_cast<std::size_t>(t)];
    const int i = theta_index(t);
    for (const SdRow& row : st.rows) {
      qp.a_ineq.block(r, i, 1, dof) = -row.grad.transpose();
      qp.a_ineq(r, slack0 + r) = -1.0;
      qp.b_ineq[r] = row.sd - row.margin - row.grad.dot(st.theta);
      ++r;
    }
  }
  if (with_risk) {
    // (1/Delta) sum_O [eps0 + g (theta - theta0)] - a_t - s <= 0; saturated pairs carry no row term.
    for (int t = 0; t < T; ++t) {
      const StepData& st = e.steps[static_cast<std::size_t>(t)];
      const bool interior = t > 0 && t < T - 1;
      double constant = 0.0;
      VectorXd g = VectorXd::Zero(dof);
      for (const PairRisk& pr : st.risk) {
        if (pr.saturated) continue;
        constant += pr.risk;
        if (interior && pr.grad.size() == dof) {
          g += pr.grad;
          constant -= pr.grad.dot(st.theta);
        }
      }
      if (interior) qp.a_ineq.block(r, theta_index(t), 1, dof) = inv_budget * g.transpose();
      qp.a_ineq(r, alloc0 + t) = -1.0;
      qp.a_ineq(r, slack0 + r) = -1.0;
      qp.b_ineq[r] = -inv_budget * constant;
      ++r;
    }
    for (int t = 0; t < T; ++t) qp.a_ineq(r, alloc0 + t) = 1.0;
    qp.a_ineq(r, slack0 + r) = -1.0;
    qp.b_ineq[r] = 1.0 - config.budget_backoff;
    ++r;
  }
  return sp;
}

// Exact l1 model of the merit at z (slacks ignored; violations recomputed).
double model_merit(const Subproblem& sp, const VectorXd& z, const Trajectory& endpoints_from, double mu) {
  const int slack0 = sp.n_theta + sp.n_alloc;
  VectorXd x = z;
  x.tail(sp.n_slack).setZero();
  double viol = 0.0;
  if (sp.n_slack > 0) {
    const VectorXd lhs = sp.qp.a_ineq * x - sp.qp.b_ineq;
    viol = lhs.cwiseMax(0.0).sum();
  }
  (void)slack0;
  Trajectory traj = endpoints_from;
  const int dof = static_cast<int>(traj.front().size());
  for (std::size_t t = 1; t + 1 < traj.size(); ++t) traj[t] = z.segment(static_cast<Eigen::Index>((t - 1) * dof), dof);
  return trajectory_objective(traj) + mu * viol;
}

void validate_config(const SCOConfig& c) {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(c.mu_initial) || !positive(c.mu_max) || !(c.mu_growth > 1.0) || !positive(c.trust_radius) ||
      !(c.trust_expand >= 1.0) || !(c.trust_shrink > 0.0 && c.trust_shrink < 1.0) || !positive(c.trust_min) ||
      !positive(c.trust_max) || !positive(c.constraint_tolerance) || !positive(c.objective_tolerance) ||
      !(c.improve_ratio > 0.0 && c.improve_ratio < 1.0) || c.max_outer < 1 || c.max_inner < 1 ||
      !(c.eps_tol > 0.0 && c.eps_tol < 0.5) || !(c.activation_distance >= 0.0) ||
      !(c.budget_backoff >= 0.0 && c.budget_backoff < 1.0)) {
    throw DomainError("invalid SCO configuration");
  }
}

}  // namespace

void TrajectoryProblem::validate() const {
  if (timesteps < 2) throw DomainError("trajectory needs at least 2 timesteps");
  if (!(risk_budget > 0.0 && risk_budget < 1.0)) throw DomainError("risk budget must lie in (0, 1)");
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw DomainError("safety margin must be nonnegative");
  const int dof = robot.dof();
  if (start.size() != dof || goal.size() != dof) throw DomainError("start and goal must have one entry per joint");
  if (!start.allFinite() || !goal.allFinite()) throw DomainError("start and goal must be finite");
  const JointState lo = robot.lower_limits();
  const JointState hi = robot.upper_limits();
  for (int j = 0; j < dof; ++j) {
    if (start[j] < lo[j] || start[j] > hi[j] || goal[j] < lo[j] || goal[j] > hi[j]) {
      throw DomainError("start or goal violates the joint limits of joint " + std::to_string(j));
    }
  }
  if (pair_margins.size() > 0) {
    if (pair_margins.rows() != timesteps || pair_margins.cols() != static_cast<Eigen::Index>(obstacles.size())) {
      throw DomainError("per-pair margins must be timesteps x obstacles");
    }
    if (!(pair_margins.array() >= 0.0).all()) throw DomainError("per-pair margins must be nonnegative");
  }
  for (const auto& o : obstacles) {
    if (o.dim() != obstacles.front().dim()) throw DomainError("obstacles mix planar and spatial workspaces");
  }
}

double TrajectoryProblem::margin_for(int t, int obstacle) const {
  return pair_margins.size() > 0 ? pair_margins(t, obstacle) : margin;
}

std::string to_string(Status s) {
  switch (s) {
    case Status::Converged:
      return "converged";
    case Status::Infeasible:
      return "infeasible";
    case Status::IterationLimit:
      return "iteration-limit";
  }
  return "unknown";
}

Trajectory seed_trajectory(const TrajectoryProblem& problem) {
  problem.validate();
  const int T = problem.timesteps;
  Trajectory traj;
  traj.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const double s = static_cast<double>(t) / (T - 1);
    traj.push_back(t == T - 1 ? problem.goal : JointState(problem.start + s * (problem.goal - problem.start)));
  }
  return traj;
}

VectorXd uniform_allocation(const TrajectoryProblem& problem) {
  return VectorXd::Constant(problem.timesteps, problem.risk_budget / problem.timesteps);
}

double trajectory_objective(const Trajectory& traj) {
  double f = 0.0;
  for (std::size_t t = 1; t < traj.size(); ++t) f += (traj[t] - traj[t - 1]).squaredNorm();
  return f;
}

double path_length(const Trajectory& traj) {
  double f = 0.0;
  for (std::size_t t = 1; t < traj.size(); ++t) f += (traj[t] - traj[t - 1]).norm();
  return f;
}

qp::QuadraticProgram convexify(const TrajectoryProblem& problem, const Trajectory& current, const VectorXd& allocation,
                               double trust_radius, double mu, const SCOConfig& config) {
  problem.validate();
  if (static_cast<int>(current.size()) != problem.timesteps) throw DomainError("trajectory length differs from T");
  if (config.risk_constraints && allocation.size() != problem.timesteps) {
    throw DomainError("allocation length differs from T");
  }
  const Evaluation e = evaluate_all(problem, current, config, config.risk_constraints, nullptr);
  const VectorXd a = config.risk_constraints ? VectorXd(allocation / problem.risk_budget) : VectorXd();
  return build_subproblem(problem, e, a, trust_radius, mu, config).qp;
}

ViolationReport evaluate_constraints(const TrajectoryProblem& problem, const Trajectory& traj,
                                     const VectorXd& allocation, double eps_tol) {
  problem.validate();
  const int T = problem.timesteps;
  const int n_obs = static_cast<int>(problem.obstacles.size());
  const int dof = problem.robot.dof();
  if (static_cast<int>(traj.size()) != T) throw DomainError("trajectory length differs from T");
  for (const auto& th : traj) {
    if (th.size() != dof) throw DomainError("trajectory state has the wrong number of joints");
  }
  if (allocation.size() != T) throw DomainError("allocation length differs from T");

  ViolationReport rep;
  rep.signed_distance = MatrixXd::Constant(T, n_obs, kInf);
  rep.pair_risk = MatrixXd::Zero(T, n_obs);
  rep.margin_violation = MatrixXd::Zero(T, n_obs);
  rep.timestep_risk = VectorXd::Zero(T);
  rep.risk_violation = VectorXd::Zero(T);
  risk::CertifyOptions copt;
  copt.eps_tol = eps_tol;
  for (int t = 0; t < T; ++t) {
    const auto poses = kinematics::forward_kinematics(problem.robot, traj[static_cast<std::size_t>(t)]);
    const auto bodies = kinematics::posed_bodies(problem.robot, poses);
    for (int o = 0; o < n_obs; ++o) {
      const UncertainObstacle& obs = problem.obstacles[static_cast<std::size_t>(o)];
      geometry::QueryOptions q;
      q.dim = obs.dim();
      for (const auto& b : bodies) {
        rep.signed_distance(t, o) = std::min(rep.signed_distance(t, o), geometry::distance(b.body, obs.nominal(), q).signed_distance);
      }
      rep.margin_violation(t, o) = std::max(0.0, problem.margin_for(t, o) - rep.signed_distance(t, o));
      const auto cert = risk::certify_risk(bodies, obs, copt);
      rep.pair_risk(t, o) = cert.saturated ? 1.0 : cert.eps_prime;
    }
    rep.timestep_risk[t] = rep.pair_risk.row(t).sum();
    rep.risk_violation[t] = std::max(0.0, rep.timestep_risk[t] - allocation[t]);
  }
  rep.total_risk = rep.timestep_risk.sum();
  rep.allocation_residual = allocation.sum() - problem.risk_budget;
  rep.negative_allocation = std::max(0.0, -allocation.minCoeff());
  rep.max_margin_violation = n_obs > 0 ? rep.margin_violation.maxCoeff() : 0.0;
  rep.max_violation = std::max({rep.max_margin_violation, T > 0 ? rep.risk_violation.maxCoeff() : 0.0,
                                std::max(0.0, rep.allocation_residual), rep.negative_allocation});
  return rep;
}

PlanResult solve(const TrajectoryProblem& problem, const SCOConfig& config) {
  const auto clock_start = std::chrono::steady_clock::now();
  problem.validate();
  validate_config(config);
  const int T = problem.timesteps;
  const int dof = problem.robot.dof();
  const bool with_risk = config.risk_constraints;
  const double budget = problem.risk_budget;

  Trajectory traj = config.seed ? *config.seed : seed_trajectory(problem);
  if (static_cast<int>(traj.size()) != T) throw DomainError("seed trajectory length differs from T");
  for (auto& th : traj) {
    if (th.size() != dof) throw DomainError("seed trajectory state has the wrong number of joints");
  }
  traj.front() = problem.start;
  traj.back() = problem.goal;

  PlanResult result;
  VectorXd a = with_risk ? VectorXd::Constant(T, 1.0 / T) : VectorXd();
  Evaluation cur = evaluate_all(problem, traj, config, with_risk, nullptr);
  if (with_risk) {
    // Start from an allocation that covers the seed's risk where the budget allows.
    for (int t = 0; t < T; ++t) a[t] = std::max(a[t], cur.steps[static_cast<std::size_t>(t)].risk_sum / budget);
    if (a.sum() > 1.0) a *= (1.0 - config.budget_backoff) / a.sum();
  }

  double mu = config.mu_initial;
  double radius = config.trust_radius;
  Status status = Status::IterationLimit;
  std::string message;
  int iteration = 0;
  qp::ActiveSet warm;
  Eigen::Index warm_size = -1;

  auto endpoint_problem = [&]() -> std::string {
    const auto& s0 = cur.steps.front();
    const auto& s1 = cur.steps.back();
    for (Eigen::Index o = 0; o < s0.sd_min.size(); ++o) {
      if (problem.margin_for(0, static_cast<int>(o)) - s0.sd_min[o] > config.constraint_tolerance) return "start violates the safety margin";
      if (problem.margin_for(T - 1, static_cast<int>(o)) - s1.sd_min[o] > config.constraint_tolerance) return "goal violates the safety margin";
    }
    if (with_risk && s0.risk_sum + (T > 1 ? s1.risk_sum : 0.0) > budget) return "endpoint risk alone exceeds the budget";
    return {};
  };

  const std::string endpoint_issue = endpoint_problem();
  if (!endpoint_issue.empty()) {
    status = Status::Infeasible;
    message = endpoint_issue;
  } else {
    bool done = false;
    for (int outer = 0; outer < config.max_outer && !done; ++outer) {
      radius = std::max(radius, config.trust_radius);
      for (int inner = 0; inner < config.max_inner; ++inner) {
        const double merit_old = merit(problem, cur, a, mu, config);
        bool stop_inner = false;
        bool accepted = false;
        while (!accepted && !stop_inner) {
          const Subproblem sp = build_subproblem(problem, cur, a, radius, mu, config);
          const bool use_warm = warm_size == sp.qp.size() + sp.qp.b_ineq.size();
          const qp::QPSolution sol = qp::solve_qp(sp.qp, {}, use_warm ? &warm : nullptr);
          ++result.qp_solves;
          if (sol.status != qp::Status::Optimal) {
            radius *= config.trust_shrink;
            stop_inner = radius < config.trust_min;
            continue;
          }
          warm = sol.active;
          warm_size = sp.qp.size() + sp.qp.b_ineq.size();
          const double model_old = model_merit(sp, sp.z0, cur.traj, mu);
          const double model_new = model_merit(sp, sol.z, cur.traj, mu);
          const double approx_improve = model_old - model_new;

          IterationRecord rec;
          rec.iteration = ++iteration;
          rec.outer = outer;
          rec.mu = mu;
          rec.radius = radius;
          if (approx_improve <= 1e-9 + 1e-7 * std::abs(model_old)) {
            rec.objective = cur.objective;
            rec.merit = merit_old;
            rec.max_violation = max_margin_violation(problem, cur);
            rec.sum_delta = with_risk ? a.sum() * budget : 0.0;
            result.log.push_back(rec);
            stop_inner = true;
            break;
          }

          Trajectory next_traj = cur.traj;
          for (int t = 1; t < T - 1; ++t) next_traj[static_cast<std::size_t>(t)] = sol.z.segment((t - 1) * dof, dof);
          const VectorXd next_a = with_risk ? VectorXd(sol.z.segment(sp.n_theta, T)) : VectorXd();
          Evaluation next = evaluate_all(problem, next_traj, config, with_risk, &cur);
          const double merit_new = merit(problem, next, next_a, mu, config);
          const double ratio = (merit_old - merit_new) / approx_improve;
          rec.ratio = ratio;
          if (ratio >= config.improve_ratio) {
            cur = std::move(next);
            a = next_a;
            radius = std::min(radius * config.trust_expand, config.trust_max);
            accepted = true;
          } else {
            radius *= config.trust_shrink;
            stop_inner = radius < config.trust_min;
          }
          rec.accepted = accepted;
          rec.objective = cur.objective;
          rec.merit = accepted ? merit_new : merit_old;
          rec.max_violation = max_margin_violation(problem, cur);
          rec.sum_delta = with_risk ? a.sum() * budget : 0.0;
          result.log.push_back(rec);
        }
        if (stop_inner) break;
      }

      const bool margins_ok = max_margin_violation(problem, cur) <= config.constraint_tolerance;
      const bool risk_ok = !with_risk || total_risk(cur) <= budget;
      if (margins_ok && risk_ok) {
        status = Status::Converged;
        done = true;
      } else if (mu * config.mu_growth > config.mu_max) {
        status = Status::Infeasible;
        std::ostringstream msg;
        msg << "penalty weight reached " << mu << " with margin violation " << max_margin_violation(problem, cur);
        if (with_risk) msg << " and certified risk " << total_risk(cur) << " against budget " << budget;
        message = msg.str();
        done = true;
      } else {
        mu *= config.mu_growth;
      }
    }
    if (!done) message = "outer iteration limit reached";
  }

  result.trajectory = cur.traj;
  result.objective = trajectory_objective(cur.traj);
  result.path_length = path_length(cur.traj);

  // Final certification with fresh certificates.
  const VectorXd zeros = VectorXd::Zero(T);
  ViolationReport fresh = evaluate_constraints(problem, cur.traj, zeros, config.eps_tol);
  const VectorXd& risk_t = fresh.timestep_risk;
  if (with_risk && risk_t.sum() > budget) {
    result.allocation = (a * budget).cwiseMax(0.0);
  } else {
    // Certified risk per timestep plus an even share of the unused budget.
    result.allocation = risk_t.array() + (with_risk ? (budget - risk_t.sum()) / T : 0.0);
  }
  result.violations = evaluate_constraints(problem, cur.traj, result.allocation, config.eps_tol);
  result.timestep_risk = result.violations.timestep_risk;
  if (status == Status::Converged) {
    const bool ok = result.violations.max_margin_violation <= config.constraint_tolerance &&
                    (!with_risk || result.violations.max_violation <= config.constraint_tolerance);
    if (!ok) {
      status = Status::IterationLimit;
      message = "fresh certification disagrees with the optimizer's final state";
    }
  }
  result.status = status;
  result.message = message;
  result.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return result;
}

}  // namespace ccopt::scora
