#include "ccopt/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "ccopt/error.hpp"
#include "json.hpp"

namespace ccopt::io {

using geometry::ConvexBody;
using geometry::Mat3;
using geometry::Pose;
using geometry::Vec3;
using json = nlohmann::json;

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& where, const std::string& msg) const {
    throw InputError(source_ + ": " + (where.empty() ? std::string("<root>") : where) + ": " + msg);
  }

  json parse(const std::string& text) const {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      // Byte offset to line number.
      std::size_t line = 1;
      const std::size_t end = std::min<std::size_t>(e.byte, text.size());
      for (std::size_t i = 0; i < end; ++i) line += text[i] == '\n' ? 1 : 0;
      throw InputError(source_ + ":" + std::to_string(line) + ": JSON parse error: " + e.what());
    }
  }

  void fields(const json& j, const std::string& where, std::initializer_list<const char*> allowed) const {
    if (!j.is_object()) fail(where, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
      if (!ok.count(key)) fail(join(where, key), "unknown field");
    }
  }

  const json& required(const json& j, const std::string& where, const char* key) const {
    if (!j.contains(key)) fail(join(where, key), "missing required field");
    return j.at(key);
  }

  double number(const json& j, const std::string& where) const {
    if (!j.is_number()) fail(where, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(where, "expected a finite number");
    return v;
  }

  double number(const json& j, const std::string& where, const char* key) const {
    return number(required(j, where, key), join(where, key));
  }

  double number_or(const json& j, const std::string& where, const char* key, double fallback) const {
    return j.contains(key) ? number(j.at(key), join(where, key)) : fallback;
  }

  int integer(const json& j, const std::string& where) const {
    if (!j.is_number_integer()) fail(where, "expected an integer");
    return j.get<int>();
  }

  std::string string(const json& j, const std::string& where) const {
    if (!j.is_string()) fail(where, "expected a string");
    return j.get<std::string>();
  }

  std::vector<double> numbers(const json& j, const std::string& where) const {
    if (!j.is_array()) fail(where, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
  }

  /// A point with `dim` coordinates (z = 0 in the plane).
  Vec3 vec(const json& j, const std::string& where, int dim) const {
    const auto v = numbers(j, where);
    if (static_cast<int>(v.size()) != dim) fail(where, "expected " + std::to_string(dim) + " coordinates");
    Vec3 out = Vec3::Zero();
    for (int i = 0; i < dim; ++i) out[i] = v[static_cast<std::size_t>(i)];
    return out;
  }

  void version(const json& j) const {
    const int v = integer(required(j, "", "formatVersion"), "formatVersion");
    if (v != kFormatVersion) fail("formatVersion", "unsupported version " + std::to_string(v));
  }

  static std::string join(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

Pose read_pose(const Reader& r, const json& j, const std::string& where, int dim) {
  if (dim == 2) {
    r.fields(j, where, {"position", "yaw"});
    const Vec3 p = j.contains("position") ? r.vec(j.at("position"), where + ".position", 2) : Vec3::Zero();
    return Pose::from_rpy(0.0, 0.0, r.number_or(j, where, "yaw", 0.0), p);
  }
  r.fields(j, where, {"position", "rpy"});
  const Vec3 p = j.contains("position") ? r.vec(j.at("position"), where + ".position", 3) : Vec3::Zero();
  const Vec3 rpy = j.contains("rpy") ? r.vec(j.at("rpy"), where + ".rpy", 3) : Vec3::Zero();
  return Pose::from_rpy(rpy.x(), rpy.y(), rpy.z(), p);
}

double positive(const Reader& r, const json& j, const std::string& where, const char* key, bool allow_zero = false) {
  const double v = r.number(j, where, key);
  if (allow_zero ? v < 0.0 : v <= 0.0) r.fail(Reader::join(where, key), allow_zero ? "must be nonnegative" : "must be positive");
  return v;
}

// Shape in its own frame, then placed by an optional "pose" member when `posed` is set.
ConvexBody read_shape(const Reader& r, const json& j, const std::string& where, int dim, bool posed) {
  const std::string type = r.string(r.required(j, where, "type"), where + ".type");
  ConvexBody body = ConvexBody::point(Vec3::Zero());
  try {
    if (type == "sphere") {
      posed ? r.fields(j, where, {"type", "radius", "pose"}) : r.fields(j, where, {"type", "radius"});
      body = ConvexBody::sphere(Vec3::Zero(), positive(r, j, where, "radius", true));
    } else if (type == "box") {
      posed ? r.fields(j, where, {"type", "halfExtents", "pose"}) : r.fields(j, where, {"type", "halfExtents"});
      const Vec3 h = r.vec(r.required(j, where, "halfExtents"), where + ".halfExtents", dim);
      if ((h.array() < 0.0).any()) r.fail(where + ".halfExtents", "must be nonnegative");
      body = ConvexBody::box(h);
    } else if (type == "convexHull") {
      posed ? r.fields(j, where, {"type", "vertices", "pose"}) : r.fields(j, where, {"type", "vertices"});
      const json& vs = r.required(j, where, "vertices");
      if (!vs.is_array() || vs.empty()) r.fail(where + ".vertices", "expected a nonempty array of points");
      std::vector<Vec3> pts;
      for (std::size_t i = 0; i < vs.size(); ++i) pts.push_back(r.vec(vs[i], where + ".vertices[" + std::to_string(i) + "]", dim));
      body = ConvexBody::polytope(std::move(pts));
    } else if (type == "capsule") {
      posed ? r.fields(j, where, {"type", "a", "b", "radius", "pose"}) : r.fields(j, where, {"type", "a", "b", "radius"});
      body = ConvexBody::capsule(r.vec(r.required(j, where, "a"), where + ".a", dim),
                                 r.vec(r.required(j, where, "b"), where + ".b", dim), positive(r, j, where, "radius", true));
    } else {
      r.fail(where + ".type", "unknown shape '" + type + "' (expected sphere, box, convexHull or capsule)");
    }
  } catch (const DomainError& e) {
    r.fail(where, e.what());
  }
  if (posed && j.contains("pose")) body = body.posed(read_pose(r, j.at("pose"), where + ".pose", dim));
  return body;
}

kinematics::JointState joint_vector(const Reader& r, const json& j, const std::string& where) {
  const auto v = r.numbers(j, where);
  kinematics::JointState out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

void read_config(const Reader& r, const json& j, const std::string& where, scora::SCOConfig& c) {
  r.fields(j, where,
           {"muInitial", "muGrowth", "muMax", "trustRadius", "trustExpand", "trustShrink", "trustMin", "trustMax",
            "constraintTolerance", "objectiveTolerance", "improveRatio", "maxOuter", "maxInner", "activationDistance",
            "budgetBackoff"});
  c.mu_initial = r.number_or(j, where, "muInitial", c.mu_initial);
  c.mu_growth = r.number_or(j, where, "muGrowth", c.mu_growth);
  c.mu_max = r.number_or(j, where, "muMax", c.mu_max);
  c.trust_radius = r.number_or(j, where, "trustRadius", c.trust_radius);
  c.trust_expand = r.number_or(j, where, "trustExpand", c.trust_expand);
  c.trust_shrink = r.number_or(j, where, "trustShrink", c.trust_shrink);
  c.trust_min = r.number_or(j, where, "trustMin", c.trust_min);
  c.trust_max = r.number_or(j, where, "trustMax", c.trust_max);
  c.constraint_tolerance = r.number_or(j, where, "constraintTolerance", c.constraint_tolerance);
  c.objective_tolerance = r.number_or(j, where, "objectiveTolerance", c.objective_tolerance);
  c.improve_ratio = r.number_or(j, where, "improveRatio", c.improve_ratio);
  if (j.contains("maxOuter")) c.max_outer = r.integer(j.at("maxOuter"), where + ".maxOuter");
  if (j.contains("maxInner")) c.max_inner = r.integer(j.at("maxInner"), where + ".maxInner");
  c.activation_distance = r.number_or(j, where, "activationDistance", c.activation_distance);
  c.budget_backoff = r.number_or(j, where, "budgetBackoff", c.budget_backoff);
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Scene parse_scene(const std::string& text, const std::string& source) {
  const Reader r(source);
  const json j = r.parse(text);
  r.fields(j, "", {"formatVersion", "name", "dimension", "obstacles"});
  r.version(j);
  Scene scene;
  if (j.contains("name")) scene.name = r.string(j.at("name"), "name");
  scene.dim = r.integer(r.required(j, "", "dimension"), "dimension");
  if (scene.dim != 2 && scene.dim != 3) r.fail("dimension", "must be 2 or 3");
  const json& obs = r.required(j, "", "obstacles");
  if (!obs.is_array()) r.fail("obstacles", "expected an array");
  const int n = scene.dim;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const std::string where = "obstacles[" + std::to_string(i) + "]";
    const json& o = obs[i];
    r.fields(o, where, {"name", "shape", "pose", "covariance"});
    const std::string name = o.contains("name") ? r.string(o.at("name"), where + ".name") : "obstacle" + std::to_string(i);
    const std::string label = where + " ('" + name + "')";
    ConvexBody body = read_shape(r, r.required(o, where, "shape"), where + ".shape", n, false);
    if (o.contains("pose")) body = body.posed(read_pose(r, o.at("pose"), where + ".pose", n));
    const auto cov = r.numbers(r.required(o, where, "covariance"), where + ".covariance");
    if (static_cast<int>(cov.size()) != n * n) {
      r.fail(label + ".covariance", "expected " + std::to_string(n * n) + " entries (row-major " + std::to_string(n) + "x" + std::to_string(n) + ")");
    }
    Mat3 sigma = Mat3::Zero();
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) sigma(a, b) = cov[static_cast<std::size_t>(a * n + b)];
    try {
      scene.obstacles.emplace_back(body, sigma, n, name);
    } catch (const DomainError& e) {
      r.fail(label + ".covariance", e.what());
    }
  }
  return scene;
}

Scene load_scene(const std::filesystem::path& path) { return parse_scene(read_file(path), path.string()); }

kinematics::RobotModel parse_robot(const std::string& text, const std::string& source) {
  const Reader r(source);
  const json j = r.parse(text);
  r.fields(j, "", {"formatVersion", "name", "base", "baseShapes", "joints"});
  r.version(j);
  const Pose base = j.contains("base") ? read_pose(r, j.at("base"), "base", 3) : Pose::identity();
  auto shapes = [&](const json& arr, const std::string& where) {
    kinematics::Link link;
    if (!arr.is_array()) r.fail(where, "expected an array of shapes");
    for (std::size_t i = 0; i < arr.size(); ++i) link.shapes.push_back(read_shape(r, arr[i], where + "[" + std::to_string(i) + "]", 3, true));
    return link;
  };
  kinematics::Link base_link = j.contains("baseShapes") ? shapes(j.at("baseShapes"), "baseShapes") : kinematics::Link{};
  base_link.name = "base";
  const json& js = r.required(j, "", "joints");
  if (!js.is_array() || js.empty()) r.fail("joints", "expected a nonempty array");
  std::vector<kinematics::Joint> joints;
  std::vector<kinematics::Link> links;
  for (std::size_t i = 0; i < js.size(); ++i) {
    const std::string where = "joints[" + std::to_string(i) + "]";
    const json& jj = js[i];
    r.fields(jj, where, {"name", "type", "axis", "offset", "limits", "shapes"});
    kinematics::Joint joint;
    joint.name = jj.contains("name") ? r.string(jj.at("name"), where + ".name") : "joint" + std::to_string(i);
    const std::string type = r.string(r.required(jj, where, "type"), where + ".type");
    if (type == "revolute") {
      joint.type = kinematics::JointType::Revolute;
    } else if (type == "prismatic") {
      joint.type = kinematics::JointType::Prismatic;
    } else {
      r.fail(where + ".type", "unknown joint type '" + type + "' (expected revolute or prismatic)");
    }
    joint.axis = r.vec(r.required(jj, where, "axis"), where + ".axis", 3);
    if (jj.contains("offset")) joint.offset = read_pose(r, jj.at("offset"), where + ".offset", 3);
    const auto lim = r.numbers(r.required(jj, where, "limits"), where + ".limits");
    if (lim.size() != 2 || !(lim[0] <= lim[1])) r.fail(where + ".limits", "expected [lower, upper] with lower <= upper");
    joint.lower = lim[0];
    joint.upper = lim[1];
    joints.push_back(joint);
    kinematics::Link link = jj.contains("shapes") ? shapes(jj.at("shapes"), where + ".shapes") : kinematics::Link{};
    link.name = joint.name;
    links.push_back(std::move(link));
  }
  try {
    return kinematics::RobotModel(base, base_link, joints, links);
  } catch (const DomainError& e) {
    r.fail("joints", e.what());
  }
}

kinematics::RobotModel load_robot(const std::filesystem::path& path) { return parse_robot(read_file(path), path.string()); }

PlanRequest parse_request(const std::string& text, const std::string& source, const std::filesystem::path& base_dir) {
  const Reader r(source);
  const json j = r.parse(text);
  r.fields(j, "", {"formatVersion", "scene", "robot", "start", "goal", "timesteps", "delta", "margin", "epsTol", "config", "ira"});
  r.version(j);
  PlanRequest q;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  if (j.contains("scene")) q.scene = resolve(r.string(j.at("scene"), "scene"));
  if (j.contains("robot")) q.robot = resolve(r.string(j.at("robot"), "robot"));
  if (j.contains("start")) q.start = joint_vector(r, j.at("start"), "start");
  if (j.contains("goal")) q.goal = joint_vector(r, j.at("goal"), "goal");
  if (j.contains("timesteps")) q.timesteps = r.integer(j.at("timesteps"), "timesteps");
  q.risk_budget = r.number_or(j, "", "delta", q.risk_budget);
  q.margin = r.number_or(j, "", "margin", q.margin);
  q.config.eps_tol = r.number_or(j, "", "epsTol", q.config.eps_tol);
  if (j.contains("config")) read_config(r, j.at("config"), "config", q.config);
  if (j.contains("ira")) {
    const json& ira = j.at("ira");
    r.fields(ira, "ira", {"sampleCount", "maxRounds", "marginStep"});
    if (ira.contains("sampleCount")) q.ira.sample_count = r.integer(ira.at("sampleCount"), "ira.sampleCount");
    if (ira.contains("maxRounds")) q.ira.max_rounds = r.integer(ira.at("maxRounds"), "ira.maxRounds");
    q.ira.margin_step = r.number_or(ira, "ira", "marginStep", q.ira.margin_step);
  }
  return q;
}

PlanRequest load_request(const std::filesystem::path& path) {
  return parse_request(read_file(path), path.string(), path.parent_path());
}

scora::Trajectory parse_trajectory_csv(const std::string& text, int dof, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  scora::Trajectory traj;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    const auto where = source + ":" + std::to_string(lineno) + ": ";
    if (!header) {
      if (cells.empty() || cells[0] != "t") throw InputError(where + "expected a header row starting with 't'");
      if (static_cast<int>(cells.size()) != dof + 1) {
        throw InputError(where + "trajectory has " + std::to_string(cells.size() - 1) + " joint columns, robot has " + std::to_string(dof));
      }
      header = true;
      continue;
    }
    if (static_cast<int>(cells.size()) != dof + 1) throw InputError(where + "expected " + std::to_string(dof + 1) + " columns");
    kinematics::JointState th(dof);
    for (int k = 0; k <= dof; ++k) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[static_cast<std::size_t>(k)], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[static_cast<std::size_t>(k)].size() || !std::isfinite(v)) {
        throw InputError(where + "column " + std::to_string(k + 1) + ": not a number");
      }
      if (k == 0) {
        if (v != static_cast<double>(traj.size())) throw InputError(where + "timestep index out of sequence");
      } else {
        th[k - 1] = v;
      }
    }
    traj.push_back(th);
  }
  if (!header) throw InputError(source + ": empty trajectory file");
  if (traj.empty()) throw InputError(source + ": trajectory has no rows");
  return traj;
}

scora::Trajectory load_trajectory_csv(const std::filesystem::path& path, int dof) {
  return parse_trajectory_csv(read_file(path), dof, path.string());
}

std::string trajectory_csv(const scora::Trajectory& traj) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "t";
  const Eigen::Index dof = traj.empty() ? 0 : traj.front().size();
  for (Eigen::Index j = 0; j < dof; ++j) out << ",theta_" << j;
  out << "\r\n";
  for (std::size_t t = 0; t < traj.size(); ++t) {
    out << t;
    for (Eigen::Index j = 0; j < dof; ++j) out << "," << traj[t][j];
    out << "\r\n";
  }
  return out.str();
}

}  // namespace ccopt::io
