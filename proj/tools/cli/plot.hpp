#pragma once

#include <string>
#include <vector>

#include "ccopt/scora.hpp"

namespace ccopt::cli {

/// Standalone SVG of the x-y plane: nominal obstacles with their 1, 2 and 3
/// sigma covariance ellipses, the robot at every timestep and the path of its
/// last body. 3D scenes are projected top-down.
std::string plot_svg(const std::vector<risk::UncertainObstacle>& obstacles, const kinematics::RobotModel& robot,
                     const scora::Trajectory& trajectory, const std::string& title);

}  // namespace ccopt::cli
