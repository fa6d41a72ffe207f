#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ccopt/scora.hpp"
#include "ccopt/validate.hpp"

// Scene, robot and request files (JSON, formatVersion 1) and trajectory CSV.
// Unknown fields are rejected; every error names the file and the field path,
// and parse errors also carry a line number.

namespace ccopt::io {

inline constexpr int kFormatVersion = 1;

struct Scene {
  std::string name;
  int dim = 3;
  std::vector<risk::UncertainObstacle> obstacles;
};

Scene parse_scene(const std::string& text, const std::string& source = "scene");
Scene load_scene(const std::filesystem::path& path);

kinematics::RobotModel parse_robot(const std::string& text, const std::string& source = "robot");
kinematics::RobotModel load_robot(const std::filesystem::path& path);

struct PlanRequest {
  std::filesystem::path scene;
  std::filesystem::path robot;
  std::optional<kinematics::JointState> start;
  std::optional<kinematics::JointState> goal;
  int timesteps = 10;
  double risk_budget = 0.01;
  double margin = 0.0;
  scora::SCOConfig config;
  validate::IraOptions ira;
};

/// Relative scene/robot paths resolve against the request file's directory.
PlanRequest parse_request(const std::string& text, const std::string& source = "request",
                          const std::filesystem::path& base_dir = {});
PlanRequest load_request(const std::filesystem::path& path);

/// Rows "t,theta_0,...". A header row is expected and checked.
scora::Trajectory parse_trajectory_csv(const std::string& text, int dof, const std::string& source = "trajectory");
scora::Trajectory load_trajectory_csv(const std::filesystem::path& path, int dof);
std::string trajectory_csv(const scora::Trajectory& traj);

std::string read_file(const std::filesystem::path& path);

}  // namespace ccopt::io
