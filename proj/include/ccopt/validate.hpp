#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccopt/scora.hpp"

// Monte Carlo ground truth for collision probability and shadow containment,
// and the two baseline planners.

namespace ccopt::validate {

using geometry::ConvexBody;
using geometry::Vec3;
using kinematics::RobotModel;
using risk::UncertainObstacle;
using scora::Trajectory;

/// SplitMix64 stream keyed by (seed, sample, stream). Satisfies
/// UniformRandomBitGenerator, so std distributions can draw from it.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t sample, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

 private:
  std::uint64_t state_;
};

/// Displacement d ~ N(0, Sigma) of one obstacle for one sample.
Vec3 sample_displacement(const UncertainObstacle& obstacle, std::uint64_t seed, std::uint64_t sample,
                         std::uint64_t obstacle_index);

struct MonteCarloReport {
  std::int64_t samples = 0;
  std::int64_t hits = 0;
  double estimate = 0.0;
  double standard_error = 0.0;
  std::uint64_t seed = 0;
  /// Containment only: "vertices" (exact) or "directions" (sampled support test).
  std::string method;
  int direction_count = 0;
};

MonteCarloReport make_report(std::int64_t samples, std::int64_t hits, std::uint64_t seed);

/// Fraction of samples in which some configuration of the trajectory touches
/// some displaced obstacle. Each obstacle is displaced once per sample and
/// stays put along the trajectory. `workers` splits the samples across threads
/// without changing the result.
MonteCarloReport monte_carlo_risk(const RobotModel& robot, const Trajectory& trajectory,
                                  const std::vector<UncertainObstacle>& obstacles, std::int64_t samples,
                                  std::uint64_t seed, int workers = 1);

/// Fraction of samples in which the displaced obstacle lies inside `body`.
MonteCarloReport monte_carlo_containment(const UncertainObstacle& obstacle, const ConvexBody& body,
                                         std::int64_t samples, std::uint64_t seed, int workers = 1);

/// The same deterministic SCO solve with only the signed-distance rows.
scora::PlanResult risk_blind_plan(const scora::TrajectoryProblem& problem, const scora::SCOConfig& config = {});

struct IraOptions {
  std::int64_t sample_count = 1000;
  int max_rounds = 20;
  /// Margin growth per round in units of the obstacle's largest standard deviation.
  double margin_step = 0.5;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct IraResult {
  scora::PlanResult plan;
  int rounds = 0;
  /// Sum over timesteps of the sampled per-timestep risk of the final plan.
  double estimated_risk = 0.0;
  Eigen::VectorXd estimated_timestep_risk;
  Eigen::MatrixXd pair_margins;
  bool estimate_within_budget = false;
};

/// Iterative risk allocation baseline: deterministic solves with per-pair
/// margins, grown where the sampled risk of a (timestep, obstacle) pair
/// exceeds its uniform share of the budget.
IraResult ira_plan(const scora::TrajectoryProblem& problem, const scora::SCOConfig& config = {},
                   const IraOptions& options = {});

}  // namespace ccopt::validate
