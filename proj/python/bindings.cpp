#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ccopt/error.hpp"
#include "ccopt/geometry.hpp"
#include "ccopt/io.hpp"
#include "ccopt/risk.hpp"
#include "ccopt/scora.hpp"
#include "ccopt/stats.hpp"
#include "ccopt/validate.hpp"
#include "cli/cli.hpp"

namespace py = pybind11;
using namespace ccopt;
using geometry::ConvexBody;
using geometry::Mat3;
using geometry::Pose;
using geometry::Vec3;

namespace {

Mat3 covariance_from(const Eigen::MatrixXd& m, int dim) {
  if (m.rows() != dim || m.cols() != dim) {
    throw DomainError("covariance must be " + std::to_string(dim) + "x" + std::to_string(dim));
  }
  Mat3 out = Mat3::Zero();
  out.topLeftCorner(dim, dim) = m;
  return out;
}

scora::TrajectoryProblem make_problem(const kinematics::RobotModel& robot,
                                      const std::vector<risk::UncertainObstacle>& obstacles,
                                      const Eigen::VectorXd& start, const Eigen::VectorXd& goal, int timesteps,
                                      double risk_budget, double margin) {
  scora::TrajectoryProblem p{robot, obstacles, timesteps, start, goal, risk_budget, margin, {}};
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Chance-constrained trajectory optimization with certified collision risk.";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("chi2_cdf", [](double x, int n) { return stats::chi2_cdf(x, stats::Dof(n)); }, py::arg("x"), py::arg("dof"));
  m.def("chi2_sf", [](double x, int n) { return stats::chi2_sf(x, stats::Dof(n)); }, py::arg("x"), py::arg("dof"));
  m.def("chi2_inv_cdf", [](double p, int n) { return stats::chi2_inv_cdf(p, stats::Dof(n)); }, py::arg("p"),
        py::arg("dof"));
  m.def("chi2_inv_sf", [](double q, int n) { return stats::chi2_inv_sf(q, stats::Dof(n)); }, py::arg("q"),
        py::arg("dof"));

  py::class_<ConvexBody>(m, "ConvexBody")
      .def_static("point", &ConvexBody::point)
      .def_static("sphere", &ConvexBody::sphere, py::arg("center"), py::arg("radius"))
      .def_static("box", &ConvexBody::box, py::arg("half_extents"))
      .def_static("polytope", &ConvexBody::polytope, py::arg("vertices"))
      .def_static("capsule", &ConvexBody::capsule, py::arg("a"), py::arg("b"), py::arg("radius"))
      .def("translated", &ConvexBody::translated)
      .def(
          "posed",
          [](const ConvexBody& b, double roll, double pitch, double yaw, const Vec3& t) {
            return b.posed(Pose::from_rpy(roll, pitch, yaw, t));
          },
          py::arg("roll"), py::arg("pitch"), py::arg("yaw"), py::arg("translation"))
      .def("linear_map", &ConvexBody::linear_map)
      .def("support", &ConvexBody::support)
      .def("center", &ConvexBody::center)
      .def("bounding_radius", &ConvexBody::bounding_radius)
      .def_property_readonly("kind", &ConvexBody::kind)
      .def("__repr__", [](const ConvexBody& b) { return "<ConvexBody " + b.kind() + ">"; });

  m.def(
      "signed_distance",
      [](const ConvexBody& a, const ConvexBody& b) { return geometry::distance(a, b).signed_distance; },
      "Positive when separated, negative penetration depth when overlapping.");

  py::class_<kinematics::RobotModel>(m, "RobotModel")
      .def_property_readonly("dof", &kinematics::RobotModel::dof)
      .def_property_readonly("link_count", &kinematics::RobotModel::link_count)
      .def_property_readonly("lower_limits", &kinematics::RobotModel::lower_limits)
      .def_property_readonly("upper_limits", &kinematics::RobotModel::upper_limits);
  m.def("parse_robot", &io::parse_robot, py::arg("text"), py::arg("source") = "robot");
  m.def("load_robot", &io::load_robot, py::arg("path"));

  py::class_<risk::UncertainObstacle>(m, "UncertainObstacle")
      .def(py::init([](const ConvexBody& nominal, const Eigen::MatrixXd& cov, int dim, const std::string& name) {
             return risk::UncertainObstacle(nominal, covariance_from(cov, dim), dim, name);
           }),
           py::arg("nominal"), py::arg("covariance"), py::arg("dim"), py::arg("name") = "")
      .def_property_readonly("nominal", &risk::UncertainObstacle::nominal)
      .def_property_readonly("covariance", &risk::UncertainObstacle::covariance)
      .def_property_readonly("dim", &risk::UncertainObstacle::dim)
      .def_property_readonly("name", &risk::UncertainObstacle::name);

  py::class_<io::Scene>(m, "Scene")
      .def_readonly("name", &io::Scene::name)
      .def_readonly("dim", &io::Scene::dim)
      .def_readonly("obstacles", &io::Scene::obstacles);
  m.def("parse_scene", &io::parse_scene, py::arg("text"), py::arg("source") = "scene");
  m.def("load_scene", &io::load_scene, py::arg("path"));

  m.def("shadow_squared_radius", &risk::shadow_squared_radius, py::arg("eps"), py::arg("dim"));
  m.def("shadow", &risk::shadow, py::arg("obstacle"), py::arg("eps"));

  py::class_<risk::RiskCertificate>(m, "RiskCertificate")
      .def_readonly("eps1", &risk::RiskCertificate::eps1)
      .def_readonly("eps2", &risk::RiskCertificate::eps2)
      .def_readonly("eps_prime", &risk::RiskCertificate::eps_prime)
      .def_readonly("saturated", &risk::RiskCertificate::saturated)
      .def_readonly("contact_normal", &risk::RiskCertificate::contact_normal)
      .def_readonly("contact_point", &risk::RiskCertificate::contact_point)
      .def_readonly("link_index", &risk::RiskCertificate::link_index)
      .def_readonly("nominal_distance", &risk::RiskCertificate::nominal_distance);

  m.def(
      "certify_risk",
      [](const kinematics::RobotModel& robot, const Eigen::VectorXd& theta, const risk::UncertainObstacle& obstacle,
         double eps_tol) { return risk::certify_risk(robot, theta, obstacle, eps_tol); },
      py::arg("robot"), py::arg("theta"), py::arg("obstacle"), py::arg("eps_tol") = 1e-6);
  m.def("risk_gradient", &risk::risk_gradient, py::arg("certificate"), py::arg("robot"), py::arg("theta"),
        py::arg("obstacle"));

  py::class_<scora::SCOConfig>(m, "SCOConfig")
      .def(py::init<>())
      .def_readwrite("mu_initial", &scora::SCOConfig::mu_initial)
      .def_readwrite("mu_growth", &scora::SCOConfig::mu_growth)
      .def_readwrite("mu_max", &scora::SCOConfig::mu_max)
      .def_readwrite("trust_radius", &scora::SCOConfig::trust_radius)
      .def_readwrite("max_outer", &scora::SCOConfig::max_outer)
      .def_readwrite("max_inner", &scora::SCOConfig::max_inner)
      .def_readwrite("eps_tol", &scora::SCOConfig::eps_tol)
      .def_readwrite("constraint_tolerance", &scora::SCOConfig::constraint_tolerance)
      .def_readwrite("risk_constraints", &scora::SCOConfig::risk_constraints)
      .def_readwrite("seed", &scora::SCOConfig::seed);

  py::class_<scora::PlanResult>(m, "PlanResult")
      .def_readonly("trajectory", &scora::PlanResult::trajectory)
      .def_readonly("allocation", &scora::PlanResult::allocation)
      .def_readonly("timestep_risk", &scora::PlanResult::timestep_risk)
      .def_readonly("objective", &scora::PlanResult::objective)
      .def_readonly("path_length", &scora::PlanResult::path_length)
      .def_readonly("runtime_seconds", &scora::PlanResult::runtime_seconds)
      .def_readonly("qp_solves", &scora::PlanResult::qp_solves)
      .def_readonly("message", &scora::PlanResult::message)
      .def_property_readonly("status", [](const scora::PlanResult& r) { return scora::to_string(r.status); })
      .def_property_readonly("total_risk", [](const scora::PlanResult& r) { return r.violations.total_risk; })
      .def_property_readonly("max_violation", [](const scora::PlanResult& r) { return r.violations.max_violation; });

  m.def(
      "plan",
      [](const kinematics::RobotModel& robot, const std::vector<risk::UncertainObstacle>& obstacles,
         const Eigen::VectorXd& start, const Eigen::VectorXd& goal, int timesteps, double risk_budget, double margin,
         const scora::SCOConfig& config) {
        const auto problem = make_problem(robot, obstacles, start, goal, timesteps, risk_budget, margin);
        py::gil_scoped_release release;
        return scora::solve(problem, config);
      },
      py::arg("robot"), py::arg("obstacles"), py::arg("start"), py::arg("goal"), py::arg("timesteps") = 10,
      py::arg("risk_budget") = 0.01, py::arg("margin") = 0.0, py::arg("config") = scora::SCOConfig{});
  m.def(
      "risk_blind_plan",
      [](const kinematics::RobotModel& robot, const std::vector<risk::UncertainObstacle>& obstacles,
         const Eigen::VectorXd& start, const Eigen::VectorXd& goal, int timesteps, double margin,
         const scora::SCOConfig& config) {
        const auto problem = make_problem(robot, obstacles, start, goal, timesteps, 0.01, margin);
        py::gil_scoped_release release;
        return validate::risk_blind_plan(problem, config);
      },
      py::arg("robot"), py::arg("obstacles"), py::arg("start"), py::arg("goal"), py::arg("timesteps") = 10,
      py::arg("margin") = 0.0, py::arg("config") = scora::SCOConfig{});

  py::class_<validate::MonteCarloReport>(m, "MonteCarloReport")
      .def_readonly("samples", &validate::MonteCarloReport::samples)
      .def_readonly("hits", &validate::MonteCarloReport::hits)
      .def_readonly("estimate", &validate::MonteCarloReport::estimate)
      .def_readonly("standard_error", &validate::MonteCarloReport::standard_error)
      .def_readonly("seed", &validate::MonteCarloReport::seed);

  m.def(
      "monte_carlo_risk",
      [](const kinematics::RobotModel& robot, const scora::Trajectory& trajectory,
         const std::vector<risk::UncertainObstacle>& obstacles, std::int64_t samples, std::uint64_t seed,
         int workers) {
        py::gil_scoped_release release;
        return validate::monte_carlo_risk(robot, trajectory, obstacles, samples, seed, workers);
      },
      py::arg("robot"), py::arg("trajectory"), py::arg("obstacles"), py::arg("samples") = 100000,
      py::arg("seed") = 1, py::arg("workers") = 1);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return std::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one ccopt command; returns (exit_code, stdout, stderr).");
}
