#include "ccopt/validate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <thread>

#include "ccopt/error.hpp"

namespace ccopt::validate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Sums `count(begin, end)` over [0, n) split into contiguous chunks, one per worker.
std::int64_t parallel_count(std::int64_t n, int workers,
                            const std::function<std::int64_t(std::int64_t, std::int64_t)>& count) {
  workers = std::max(1, static_cast<int>(std::min<std::int64_t>(workers, n)));
  if (workers == 1) return count(0, n);
  std::vector<std::int64_t> partial(static_cast<std::size_t>(workers), 0);
  std::vector<std::thread> threads;
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t b = std::min(n, w * chunk);
    const std::int64_t e = std::min(n, b + chunk);
    threads.emplace_back([&, w, b, e] { partial[static_cast<std::size_t>(w)] = count(b, e); });
  }
  for (auto& t : threads) t.join();
  std::int64_t total = 0;
  for (auto p : partial) total += p;
  return total;
}

Eigen::Matrix3d displacement_factor(const UncertainObstacle& obstacle) {
  const int dim = obstacle.dim();
  Eigen::Matrix3d l = Eigen::Matrix3d::Zero();
  const MatrixXd cov = obstacle.covariance().topLeftCorner(dim, dim);
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw DomainError("obstacle covariance is not positive definite");
  l.topLeftCorner(dim, dim) = llt.matrixL();
  return l;
}

Vec3 draw(const Eigen::Matrix3d& factor, int dim, std::uint64_t seed, std::uint64_t sample, std::uint64_t index) {
  CounterRng rng(seed, sample, index);
  std::normal_distribution<double> normal;
  Vec3 z = Vec3::Zero();
  for (int i = 0; i < dim; ++i) z[i] = normal(rng);
  return factor * z;
}

void check_samples(std::int64_t samples) {
  if (samples < 1) throw DomainError("sample count must be at least 1");
}

std::vector<Vec3> containment_directions(int dim) {
  std::vector<Vec3> dirs;
  if (dim == 2) {
    for (int k = 0; k < 32; ++k) {
      const double a = 2.0 * std::numbers::pi * k / 32.0;
      dirs.emplace_back(std::cos(a), std::sin(a), 0.0);
    }
    return dirs;
  }
  // Fibonacci lattice on the sphere.
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < 64; ++k) {
    const double z = 1.0 - (2.0 * k + 1.0) / 64.0;
    const double r = std::sqrt(1.0 - z * z);
    dirs.emplace_back(r * std::cos(golden * k), r * std::sin(golden * k), z);
  }
  return dirs;
}

// Samples x obstacles x timesteps hit table for one trajectory, summarized.
struct PairSampling {
  MatrixXd pair_hits;      // T x O, samples hitting that pair
  VectorXd timestep_hits;  // samples hitting any obstacle at t
};

PairSampling sample_pairs(const RobotModel& robot, const Trajectory& trajectory,
                          const std::vector<UncertainObstacle>& obstacles, std::int64_t samples, std::uint64_t seed,
                          int workers) {
  const int T = static_cast<int>(trajectory.size());
  const int n_obs = static_cast<int>(obstacles.size());
  std::vector<std::vector<kinematics::PosedBody>> bodies;
  for (const auto& th : trajectory) bodies.push_back(kinematics::posed_bodies(robot, kinematics::forward_kinematics(robot, th)));
  std::vector<Eigen::Matrix3d> factors;
  for (const auto& o : obstacles) factors.push_back(displacement_factor(o));

  workers = std::max(1, static_cast<int>(std::min<std::int64_t>(workers, samples)));
  std::vector<PairSampling> parts(static_cast<std::size_t>(workers));
  std::vector<std::thread> threads;
  const std::int64_t chunk = (samples + workers - 1) / workers;
  auto run = [&](int w) {
    PairSampling& part = parts[static_cast<std::size_t>(w)];
    part.pair_hits = MatrixXd::Zero(T, n_obs);
    part.timestep_hits = VectorXd::Zero(T);
    const std::int64_t b = std::min(samples, w * chunk);
    const std::int64_t e = std::min(samples, b + chunk);
    std::vector<Vec3> d(static_cast<std::size_t>(n_obs));
    for (std::int64_t s = b; s < e; ++s) {
      for (int o = 0; o < n_obs; ++o) {
        d[static_cast<std::size_t>(o)] = draw(factors[static_cast<std::size_t>(o)], obstacles[static_cast<std::size_t>(o)].dim(), seed,
                                              static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(o));
      }
      for (int t = 0; t < T; ++t) {
        bool any = false;
        for (int o = 0; o < n_obs; ++o) {
          const auto& obs = obstacles[static_cast<std::size_t>(o)];
          geometry::QueryOptions q;
          q.dim = obs.dim();
          for (const auto& body : bodies[static_cast<std::size_t>(t)]) {
            if (geometry::intersects(body.body, obs.nominal(), d[static_cast<std::size_t>(o)], q)) {
              part.pair_hits(t, o) += 1.0;
              any = true;
              break;
            }
          }
        }
        if (any) part.timestep_hits[t] += 1.0;
      }
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    for (int w = 0; w < workers; ++w) threads.emplace_back(run, w);
    for (auto& t : threads) t.join();
  }
  PairSampling total{MatrixXd::Zero(T, n_obs), VectorXd::Zero(T)};
  for (const auto& p : parts) {
    total.pair_hits += p.pair_hits;
    total.timestep_hits += p.timestep_hits;
  }
  return total;
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t sample, std::uint64_t stream)
    : state_(splitmix64(splitmix64(splitmix64(seed) ^ sample) ^ stream)) {}

CounterRng::result_type CounterRng::operator()() {
  const std::uint64_t out = splitmix64(state_);
  state_ += 0x9e3779b97f4a7c15ULL;
  return out;
}

Vec3 sample_displacement(const UncertainObstacle& obstacle, std::uint64_t seed, std::uint64_t sample,
                         std::uint64_t obstacle_index) {
  return draw(displacement_factor(obstacle), obstacle.dim(), seed, sample, obstacle_index);
}

MonteCarloReport make_report(std::int64_t samples, std::int64_t hits, std::uint64_t seed) {
  MonteCarloReport r;
  r.samples = samples;
  r.hits = hits;
  r.seed = seed;
  r.estimate = static_cast<double>(hits) / static_cast<double>(samples);
  r.standard_error = std::sqrt(r.estimate * (1.0 - r.estimate) / static_cast<double>(samples));
  return r;
}

MonteCarloReport monte_carlo_risk(const RobotModel& robot, const Trajectory& trajectory,
                                  const std::vector<UncertainObstacle>& obstacles, std::int64_t samples,
                                  std::uint64_t seed, int workers) {
  check_samples(samples);
  for (const auto& th : trajectory) {
    if (th.size() != robot.dof()) throw DomainError("trajectory state has the wrong number of joints");
  }
  std::vector<std::vector<kinematics::PosedBody>> bodies;
  for (const auto& th : trajectory) bodies.push_back(kinematics::posed_bodies(robot, kinematics::forward_kinematics(robot, th)));
  std::vector<Eigen::Matrix3d> factors;
  for (const auto& o : obstacles) factors.push_back(displacement_factor(o));
  const int n_obs = static_cast<int>(obstacles.size());

  auto count = [&](std::int64_t b, std::int64_t e) {
    std::int64_t hits = 0;
    std::vector<Vec3> d(static_cast<std::size_t>(n_obs));
    for (std::int64_t s = b; s < e; ++s) {
      for (int o = 0; o < n_obs; ++o) {
        d[static_cast<std::size_t>(o)] = draw(factors[static_cast<std::size_t>(o)], obstacles[static_cast<std::size_t>(o)].dim(), seed,
                                              static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(o));
      }
      bool hit = false;
      for (int o = 0; o < n_obs && !hit; ++o) {
        const auto& obs = obstacles[static_cast<std::size_t>(o)];
        geometry::QueryOptions q;
        q.dim = obs.dim();
        for (const auto& step : bodies) {
          for (const auto& body : step) {
            if (geometry::intersects(body.body, obs.nominal(), d[static_cast<std::size_t>(o)], q)) {
              hit = true;
              break;
            }
          }
          if (hit) break;
        }
      }
      hits += hit ? 1 : 0;
    }
    return hits;
  };
  return make_report(samples, parallel_count(samples, workers, count), seed);
}

MonteCarloReport monte_carlo_containment(const UncertainObstacle& obstacle, const ConvexBody& body,
                                         std::int64_t samples, std::uint64_t seed, int workers) {
  check_samples(samples);
  const Eigen::Matrix3d factor = displacement_factor(obstacle);
  const int dim = obstacle.dim();
  const ConvexBody& nominal = obstacle.nominal();
  const std::vector<Vec3> vertices = nominal.core_vertices();
  const double m_obs = nominal.margin();
  const double m_body = body.margin();
  const double tol = 1e-10 * (1.0 + body.bounding_radius());
  geometry::QueryOptions q;
  q.dim = dim;
  const std::vector<Vec3> dirs = containment_directions(dim);
  std::vector<Vec3> dir_support;
  for (const auto& u : dirs) dir_support.push_back(nominal.support(u));

  // A ball of radius m_obs about p lies in the body exactly when p is at depth
  // >= m_obs; with m_obs <= m_body that is distance(p, body core) <= m_body - m_obs.
  auto ball_inside = [&](const Vec3& p) {
    if (m_obs <= m_body) return geometry::core_distance(ConvexBody::point(p), body, q) <= m_body - m_obs + tol;
    return geometry::distance(ConvexBody::point(p), body, q).signed_distance <= -m_obs + tol;
  };
  auto count = [&](std::int64_t b, std::int64_t e) {
    std::int64_t hits = 0;
    for (std::int64_t s = b; s < e; ++s) {
      const Vec3 d = draw(factor, dim, seed, static_cast<std::uint64_t>(s), 0);
      bool inside = true;
      if (!vertices.empty()) {
        for (const auto& v : vertices) {
          if (!ball_inside(v + d)) {
            inside = false;
            break;
          }
        }
      } else {
        for (const auto& p : dir_support) {
          if (geometry::point_distance(p + d, body, q) > tol) {
            inside = false;
            break;
          }
        }
      }
      hits += inside ? 1 : 0;
    }
    return hits;
  };
  MonteCarloReport r = make_report(samples, parallel_count(samples, workers, count), seed);
  r.method = vertices.empty() ? "directions" : "vertices";
  r.direction_count = vertices.empty() ? static_cast<int>(dirs.size()) : 0;
  return r;
}

scora::PlanResult risk_blind_plan(const scora::TrajectoryProblem& problem, const scora::SCOConfig& config) {
  scora::SCOConfig c = config;
  c.risk_constraints = false;
  return scora::solve(problem, c);
}

IraResult ira_plan(const scora::TrajectoryProblem& problem, const scora::SCOConfig& config, const IraOptions& options) {
  problem.validate();
  check_samples(options.sample_count);
  if (options.max_rounds < 1) throw DomainError("IRA needs at least one round");
  if (!(options.margin_step > 0.0)) throw DomainError("IRA margin step must be positive");
  const int T = problem.timesteps;
  const int n_obs = static_cast<int>(problem.obstacles.size());
  const double n = static_cast<double>(options.sample_count);
  const double share = problem.risk_budget / (T * std::max(1, n_obs));

  scora::TrajectoryProblem p = problem;
  p.pair_margins = problem.pair_margins.size() > 0 ? problem.pair_margins : MatrixXd::Constant(T, n_obs, problem.margin);
  scora::SCOConfig c = config;
  c.risk_constraints = false;

  const auto t_start = std::chrono::steady_clock::now();
  IraResult out;
  int qp_solves = 0;
  for (int round = 0; round < options.max_rounds; ++round) {
    out.plan = scora::solve(p, c);
    qp_solves += out.plan.qp_solves;
    out.rounds = round + 1;
    out.pair_margins = p.pair_margins;
    const PairSampling est = sample_pairs(p.robot, out.plan.trajectory, p.obstacles, options.sample_count, options.seed,
                                          options.workers);
    out.estimated_timestep_risk = est.timestep_hits / n;
    out.estimated_risk = out.estimated_timestep_risk.sum();
    out.estimate_within_budget = out.estimated_risk <= problem.risk_budget;
    if (out.estimate_within_budget || out.plan.status == scora::Status::Infeasible) break;

    bool grew = false;
    for (int t = 1; t + 1 < T; ++t) {
      for (int o = 0; o < n_obs; ++o) {
        if (est.pair_hits(t, o) / n > share) {
          p.pair_margins(t, o) += options.margin_step * p.obstacles[static_cast<std::size_t>(o)].unit_ellipsoid().max_stddev();
          grew = true;
        }
      }
    }
    if (!grew) break;
    c.seed = out.plan.trajectory;
  }

  scora::PlanResult& plan = out.plan;
  plan.allocation = out.estimated_timestep_risk;
  plan.violations = scora::evaluate_constraints(problem, plan.trajectory, plan.allocation, config.eps_tol);
  plan.qp_solves = qp_solves;
  plan.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  if (plan.status == scora::Status::Converged && !out.estimate_within_budget) {
    plan.status = scora::Status::IterationLimit;
    plan.message = "sampled risk still above the budget after " + std::to_string(out.rounds) + " rounds";
  }
  return out;
}

}  // namespace ccopt::validate
