#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "ccopt/error.hpp"
#include "ccopt/io.hpp"
#include "ccopt/validate.hpp"
#include "cli.hpp"
#include "json.hpp"
#include "plot.hpp"

namespace ccopt::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using geometry::Vec3;
using kinematics::JointState;
using kinematics::RobotModel;

namespace {

struct Options {
  std::string scene;
  std::string robot;
  std::string request;
  std::string out_dir = ".";
  bool out_dir_given = false;
  std::string trajectory;
  std::uint64_t seed = 1;
  std::optional<double> eps_tol;
  std::optional<double> delta;
  std::optional<double> margin;
  std::optional<int> timesteps;
  std::optional<std::int64_t> samples;
  int workers = 1;
  std::vector<double> start;
  std::vector<double> goal;
  std::vector<double> theta;
};

struct Setup {
  io::Scene scene;
  std::optional<scora::TrajectoryProblem> problem;
  scora::SCOConfig config;
  validate::IraOptions ira;
  fs::path scene_path;
  fs::path robot_path;

  const RobotModel& robot() const { return problem->robot; }
};

JointState to_state(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json vec_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json point_json(const Vec3& p, int dim) {
  return dim == 2 ? json::array({p.x(), p.y()}) : json::array({p.x(), p.y(), p.z()});
}

// Flags override the request file, which overrides the defaults.
Setup load_setup(const Options& opt, bool need_endpoints) {
  Setup s;
  std::optional<io::PlanRequest> req;
  if (!opt.request.empty()) req = io::load_request(opt.request);
  s.scene_path = !opt.scene.empty() ? fs::path(opt.scene) : req ? req->scene : fs::path();
  s.robot_path = !opt.robot.empty() ? fs::path(opt.robot) : req ? req->robot : fs::path();
  if (s.scene_path.empty()) throw InputError("no scene given (use --scene or --request)");
  if (s.robot_path.empty()) throw InputError("no robot given (use --robot or --request)");
  s.scene = io::load_scene(s.scene_path);
  scora::TrajectoryProblem p{io::load_robot(s.robot_path), s.scene.obstacles, 10, {}, {}, 0.01, 0.0, {}};
  if (req) {
    p.timesteps = req->timesteps;
    p.risk_budget = req->risk_budget;
    p.margin = req->margin;
    s.config = req->config;
    s.ira = req->ira;
  }
  if (opt.timesteps) p.timesteps = *opt.timesteps;
  if (opt.delta) p.risk_budget = *opt.delta;
  if (opt.margin) p.margin = *opt.margin;
  if (opt.eps_tol) s.config.eps_tol = *opt.eps_tol;
  s.ira.seed = opt.seed;
  s.ira.workers = opt.workers;

  if (!opt.start.empty()) {
    p.start = to_state(opt.start);
  } else if (req && req->start) {
    p.start = *req->start;
  }
  if (!opt.goal.empty()) {
    p.goal = to_state(opt.goal);
  } else if (req && req->goal) {
    p.goal = *req->goal;
  }
  if (need_endpoints) {
    if (p.start.size() == 0) throw InputError("no start configuration given (use --start or the request's start)");
    if (p.goal.size() == 0) throw InputError("no goal configuration given (use --goal or the request's goal)");
    p.validate();
  }
  s.problem = std::move(p);
  return s;
}

struct CertifiedTrajectory {
  Eigen::MatrixXd pair;
  Eigen::VectorXd per_step;
  double total = 0.0;
};

CertifiedTrajectory certify_trajectory(const Setup& s, const scora::Trajectory& traj) {
  const auto& obs = s.problem->obstacles;
  CertifiedTrajectory c;
  c.pair = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(traj.size()), static_cast<Eigen::Index>(obs.size()));
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const auto r = risk::scene_risk(s.robot(), traj[t], obs, s.config.eps_tol);
    for (std::size_t o = 0; o < obs.size(); ++o) {
      c.pair(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(o)) = r.certificates[o].eps_prime;
    }
  }
  c.per_step = c.pair.rowwise().sum();
  c.total = c.per_step.sum();
  return c;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError(path.string() + ": cannot open for writing");
  f << text;
  if (!f) throw InputError(path.string() + ": write failed");
}

fs::path prepare_out_dir(const Options& opt) {
  const fs::path dir(opt.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError(dir.string() + ": cannot create output directory: " + ec.message());
  return dir;
}

std::string number(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

json problem_json(const Setup& s) {
  const auto& p = *s.problem;
  return {{"scene", s.scene_path.string()},
          {"robot", s.robot_path.string()},
          {"timesteps", p.timesteps},
          {"riskBudget", p.risk_budget},
          {"margin", p.margin},
          {"epsTol", s.config.eps_tol},
          {"dof", p.robot.dof()},
          {"start", vec_json(p.start)},
          {"goal", vec_json(p.goal)}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// SCORA seeded with the risk-blind plan when that plan exists.
struct SeededPlan {
  scora::PlanResult blind;
  scora::PlanResult plan;
  bool seeded = false;
  double total_seconds = 0.0;
};

SeededPlan plan_from_blind(const Setup& s) {
  const auto t0 = std::chrono::steady_clock::now();
  SeededPlan r;
  r.blind = validate::risk_blind_plan(*s.problem, s.config);
  auto config = s.config;
  if (r.blind.status == scora::Status::Converged) {
    config.seed = r.blind.trajectory;
    r.seeded = true;
  }
  r.plan = scora::solve(*s.problem, config);
  r.total_seconds = seconds_since(t0);
  return r;
}

int cmd_plan(const Options& opt, std::ostream& out) {
  const Setup s = load_setup(opt, true);
  const fs::path dir = prepare_out_dir(opt);
  const SeededPlan sp = plan_from_blind(s);
  const auto& r = sp.plan;
  const auto cert = certify_trajectory(s, r.trajectory);

  std::ostringstream alloc;
  alloc << "t,delta,certified_risk\r\n";
  for (Eigen::Index t = 0; t < r.allocation.size(); ++t) {
    alloc << t << "," << number(r.allocation[t]) << "," << number(cert.per_step[t]) << "\r\n";
  }
  const std::string title = (s.scene.name.empty() ? std::string("scene") : s.scene.name) + ": SCORA, " +
                            scora::to_string(r.status) + ", sum of delta " + number(r.allocation.sum());

  json summary;
  summary["command"] = "plan";
  summary["status"] = scora::to_string(r.status);
  summary["message"] = r.message;
  summary["objective"] = r.objective;
  summary["pathLength"] = r.path_length;
  summary["runtimeSeconds"] = r.runtime_seconds;
  summary["totalRuntimeSeconds"] = sp.total_seconds;
  summary["initialization"] = sp.seeded ? "risk-blind" : "straight-line";
  summary["sumDelta"] = r.allocation.sum();
  summary["riskBudget"] = s.problem->risk_budget;
  summary["certifiedTotal"] = cert.total;
  summary["maxMarginViolation"] = r.violations.max_margin_violation;
  summary["qpSolves"] = r.qp_solves;
  summary["iterations"] = r.log.size();
  summary["problem"] = problem_json(s);
  summary["files"] = {{"trajectory", (dir / "trajectory.csv").string()},
                      {"allocation", (dir / "allocation.csv").string()},
                      {"summary", (dir / "summary.json").string()},
                      {"plot", (dir / "plot.svg").string()}};

  write_file(dir / "trajectory.csv", io::trajectory_csv(r.trajectory));
  write_file(dir / "allocation.csv", alloc.str());
  write_file(dir / "plot.svg", plot_svg(s.problem->obstacles, s.robot(), r.trajectory, title));
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  out << summary.dump(2) << "\n";
  return r.status == scora::Status::Converged ? kSuccess : kInfeasible;
}

int cmd_certify(const Options& opt, std::ostream& out) {
  const Setup s = load_setup(opt, false);
  const auto& robot = s.robot();
  if (opt.theta.empty()) throw InputError("no configuration given (use --theta)");
  const JointState theta = to_state(opt.theta);
  if (theta.size() != robot.dof()) {
    throw DomainError("configuration has " + std::to_string(theta.size()) + " entries, robot has " +
                      std::to_string(robot.dof()) + " joints");
  }
  const int dim = s.scene.dim;
  json report;
  report["command"] = "certify";
  report["scene"] = s.scene_path.string();
  report["robot"] = s.robot_path.string();
  report["theta"] = vec_json(theta);
  report["epsTol"] = s.config.eps_tol;
  json rows = json::array();
  double total = 0.0;
  for (const auto& obs : s.problem->obstacles) {
    const auto c = risk::certify_risk(robot, theta, obs, s.config.eps_tol);
    total += c.eps_prime;
    json row = {{"name", obs.name()},
                {"eps1", c.eps1},
                {"eps2", c.eps2},
                {"epsPrime", c.eps_prime},
                {"saturated", c.saturated},
                {"nominalDistance", c.nominal_distance},
                {"link", c.link_index},
                {"contactNormal", point_json(c.contact_normal, dim)},
                {"contactPoint", point_json(c.contact_point, dim)}};
    // A saturated certificate is flat at 1.
    row["gradient"] = c.saturated ? json(nullptr) : vec_json(risk::risk_gradient(c, robot, theta, obs));
    rows.push_back(row);
  }
  report["obstacles"] = rows;
  report["total"] = total;
  if (opt.out_dir_given) write_file(prepare_out_dir(opt) / "certify.json", report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kSuccess;
}

json mc_json(const validate::MonteCarloReport& r) {
  return {{"samples", r.samples},
          {"hits", r.hits},
          {"estimate", r.estimate},
          {"standardError", r.standard_error},
          {"seed", r.seed}};
}

int cmd_validate(const Options& opt, std::ostream& out) {
  const Setup s = load_setup(opt, false);
  if (opt.trajectory.empty()) throw InputError("no trajectory given (use --trajectory)");
  const auto traj = io::load_trajectory_csv(opt.trajectory, s.robot().dof());
  const std::int64_t n = opt.samples.value_or(100000);
  const auto mc = validate::monte_carlo_risk(s.robot(), traj, s.problem->obstacles, n, opt.seed, opt.workers);
  const auto cert = certify_trajectory(s, traj);

  json report;
  report["command"] = "validate";
  report["scene"] = s.scene_path.string();
  report["robot"] = s.robot_path.string();
  report["trajectory"] = opt.trajectory;
  report["workers"] = opt.workers;
  report["monteCarlo"] = mc_json(mc);
  report["certifiedTotal"] = cert.total;
  report["certifiedTimestepRisk"] = vec_json(cert.per_step);
  report["estimateWithinCertified"] = mc.estimate <= cert.total + 3.0 * mc.standard_error;
  if (opt.delta) {
    report["riskBudget"] = *opt.delta;
    report["withinBudget"] = mc.estimate <= *opt.delta;
  }
  if (opt.out_dir_given) write_file(prepare_out_dir(opt) / "validate.json", report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kSuccess;
}

struct Row {
  std::string algorithm;
  std::string status = "error";
  std::string message;
  double runtime = 0.0;
  double path_length = 0.0;
  double objective = 0.0;
  double certified = 0.0;
  std::optional<validate::MonteCarloReport> mc;
  std::optional<std::uint64_t> planner_seed;
  json extra = json::object();
};

int cmd_compare(const Options& opt, std::ostream& out) {
  const Setup s = load_setup(opt, true);
  const fs::path dir = prepare_out_dir(opt);
  const std::int64_t n = opt.samples.value_or(100000);
  const double budget = s.problem->risk_budget;

  auto finish = [&](Row& row, const scora::PlanResult& r) {
    row.status = scora::to_string(r.status);
    row.message = r.message;
    row.runtime = r.runtime_seconds;
    row.path_length = r.path_length;
    row.objective = r.objective;
    row.certified = certify_trajectory(s, r.trajectory).total;
    row.mc = validate::monte_carlo_risk(s.robot(), r.trajectory, s.problem->obstacles, n, opt.seed, opt.workers);
  };

  std::vector<Row> rows(3);
  rows[0].algorithm = "risk-blind";
  rows[1].algorithm = "IRA";
  rows[2].algorithm = "SCORA";
  std::optional<scora::Trajectory> blind;
  try {
    const auto r = validate::risk_blind_plan(*s.problem, s.config);
    finish(rows[0], r);
    if (r.status == scora::Status::Converged) blind = r.trajectory;
  } catch (const std::exception& e) {
    rows[0].message = e.what();
  }
  auto seeded = s.config;
  seeded.seed = blind;
  try {
    const auto r = validate::ira_plan(*s.problem, seeded, s.ira);
    finish(rows[1], r.plan);
    rows[1].planner_seed = s.ira.seed;
    rows[1].extra = {{"rounds", r.rounds},
                     {"sampleCount", s.ira.sample_count},
                     {"estimatedRisk", r.estimated_risk},
                     {"estimateWithinBudget", r.estimate_within_budget}};
  } catch (const std::exception& e) {
    rows[1].message = e.what();
  }
  try {
    finish(rows[2], scora::solve(*s.problem, seeded));
  } catch (const std::exception& e) {
    rows[2].message = e.what();
  }

  json table = json::array();
  std::ostringstream csv;
  csv << "algorithm,status,runtime_s,path_length_rad,objective,certified_risk,mc_risk,mc_standard_error,mc_samples,"
         "mc_seed,planner_seed,within_budget,message\r\n";
  for (const auto& row : rows) {
    json j{{"algorithm", row.algorithm}, {"status", row.status}, {"message", row.message}};
    const bool ran = row.mc.has_value();
    if (ran) {
      j["runtimeSeconds"] = row.runtime;
      j["pathLength"] = row.path_length;
      j["objective"] = row.objective;
      j["certifiedRisk"] = row.certified;
      j["monteCarlo"] = mc_json(*row.mc);
      j["withinBudget"] = row.mc->estimate <= budget;
    }
    j["mcSeed"] = opt.seed;
    if (row.planner_seed) j["plannerSeed"] = *row.planner_seed;
    for (const auto& [k, v] : row.extra.items()) j[k] = v;
    table.push_back(j);

    csv << csv_field(row.algorithm) << "," << csv_field(row.status) << ",";
    if (ran) {
      csv << number(row.runtime) << "," << number(row.path_length) << "," << number(row.objective) << ","
          << number(row.certified) << "," << number(row.mc->estimate) << "," << number(row.mc->standard_error) << ","
          << row.mc->samples << ",";
    } else {
      csv << ",,,,,,,";
    }
    csv << opt.seed << "," << (row.planner_seed ? std::to_string(*row.planner_seed) : std::string()) << ","
        << (ran ? (row.mc->estimate <= budget ? "true" : "false") : "") << "," << csv_field(row.message) << "\r\n";
  }

  json report;
  report["command"] = "compare";
  report["problem"] = problem_json(s);
  report["samples"] = n;
  report["rows"] = table;
  report["files"] = {{"json", (dir / "compare.json").string()}, {"csv", (dir / "compare.csv").string()}};
  write_file(dir / "compare.json", report.dump(2) + "\n");
  write_file(dir / "compare.csv", csv.str());
  out << report.dump(2) << "\n";
  return kSuccess;
}

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--scene", opt.scene, "Scene file (JSON)");
  cmd->add_option("--robot", opt.robot, "Robot file (JSON)");
  cmd->add_option("--request", opt.request, "Plan request file (JSON); flags override its fields");
  cmd->add_option_function<std::string>(
      "--out-dir",
      [&opt](const std::string& v) {
        opt.out_dir = v;
        opt.out_dir_given = true;
      },
      "Directory for output files");
  cmd->add_option("--seed", opt.seed, "Random seed for sampling")->capture_default_str();
  cmd->add_option("--eps-tol", opt.eps_tol, "Certificate resolution epsTol")->check(CLI::Range(1e-300, 0.5));
  cmd->add_option("--delta", opt.delta, "Total risk budget");
  cmd->add_option("--timesteps", opt.timesteps, "Number of configurations T, endpoints included");
  cmd->add_option("--margin", opt.margin, "Signed-distance margin (m)");
  cmd->add_option("--samples", opt.samples, "Monte Carlo sample count")->check(CLI::PositiveNumber);
  cmd->add_option("--workers", opt.workers, "Monte Carlo worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string q = "\"";
  for (char c : value) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const DomainError*>(&e)) return kInvalidInput;
  if (dynamic_cast<const NumericalError*>(&e)) return kNumericalFailure;
  return kInternalError;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chance-constrained trajectory planning with certified collision risk"};
  app.name("ccopt");
  app.require_subcommand(1);
  Options opt;

  auto* plan = app.add_subcommand("plan", "Plan a trajectory within the risk budget");
  add_common(plan, opt);
  plan->add_option("--start", opt.start, "Start configuration")->delimiter(',');
  plan->add_option("--goal", opt.goal, "Goal configuration")->delimiter(',');

  auto* certify = app.add_subcommand("certify", "Certify the collision risk of one configuration");
  add_common(certify, opt);
  certify->add_option("--theta", opt.theta, "Joint configuration")->delimiter(',')->required();

  auto* valid = app.add_subcommand("validate", "Monte Carlo collision risk of a trajectory");
  add_common(valid, opt);
  valid->add_option("--trajectory", opt.trajectory, "Trajectory CSV (t,theta_0,...)")->required();

  auto* compare = app.add_subcommand("compare", "Risk-blind, IRA and SCORA on the same problem");
  add_common(compare, opt);
  compare->add_option("--start", opt.start, "Start configuration")->delimiter(',');
  compare->add_option("--goal", opt.goal, "Goal configuration")->delimiter(',');

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kInvalidInput;
  }

  try {
    if (plan->parsed()) return cmd_plan(opt, out);
    if (certify->parsed()) return cmd_certify(opt, out);
    if (valid->parsed()) return cmd_validate(opt, out);
    return cmd_compare(opt, out);
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    err << (code == kNumericalFailure ? "numerical failure: " : code == kInternalError ? "internal error: " : "error: ")
        << e.what() << "\n";
    return code;
  }
}

}  // namespace ccopt::cli
