#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace ccopt::cli {

using geometry::ConvexBody;
using geometry::Vec3;

namespace {

using Point = Eigen::Vector2d;
using Polygon = std::vector<Point>;

// Outline of the body's projection onto the x-y plane.
Polygon outline(const ConvexBody& body, int directions) {
  Polygon poly;
  for (int i = 0; i < directions; ++i) {
    const double a = 2.0 * std::numbers::pi * i / directions;
    const Vec3 p = body.support(Vec3(std::cos(a), std::sin(a), 0.0));
    const Point q(p.x(), p.y());
    if (poly.empty() || (poly.back() - q).norm() > 1e-9) poly.push_back(q);
  }
  return poly;
}

Polygon ellipse(const Point& center, const Eigen::Matrix2d& cov, double k) {
  const Eigen::LLT<Eigen::Matrix2d> llt(cov);
  const Eigen::Matrix2d l = llt.matrixL();
  Polygon poly;
  for (int i = 0; i < 72; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 72;
    poly.push_back(center + k * l * Point(std::cos(a), std::sin(a)));
  }
  return poly;
}

class Canvas {
 public:
  void include(const Polygon& poly) {
    for (const auto& p : poly) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
  }

  void fit(double width) {
    const Point span = (hi_ - lo_).cwiseMax(Point(1e-3, 1e-3));
    lo_ -= 0.05 * span;
    hi_ += 0.05 * span;
    scale_ = width / (hi_ - lo_).x();
    width_ = width;
    height_ = scale_ * (hi_ - lo_).y();
  }

  Point map(const Point& p) const { return {(p.x() - lo_.x()) * scale_, (hi_.y() - p.y()) * scale_}; }
  double width() const { return width_; }
  double height() const { return height_; }
  double scale() const { return scale_; }

  std::string points(const Polygon& poly) const {
    std::ostringstream s;
    s.precision(6);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point q = map(poly[i]);
      s << (i ? " " : "") << q.x() << "," << q.y();
    }
    return s.str();
  }

 private:
  Point lo_ = Point::Constant(std::numeric_limits<double>::infinity());
  Point hi_ = Point::Constant(-std::numeric_limits<double>::infinity());
  double scale_ = 1.0;
  double width_ = 0.0;
  double height_ = 0.0;
};

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string plot_svg(const std::vector<risk::UncertainObstacle>& obstacles, const kinematics::RobotModel& robot,
                     const scora::Trajectory& trajectory, const std::string& title) {
  struct ObstacleDrawing {
    std::string name;
    Polygon nominal;
    std::vector<Polygon> sigma;
  };
  std::vector<ObstacleDrawing> drawn;
  Canvas canvas;
  for (const auto& obs : obstacles) {
    ObstacleDrawing d{obs.name(), outline(obs.nominal(), 96), {}};
    const Vec3 c = obs.nominal().center();
    const Eigen::Matrix2d cov = obs.covariance().topLeftCorner<2, 2>();
    for (double k : {1.0, 2.0, 3.0}) {
      d.sigma.push_back(ellipse(Point(c.x(), c.y()), cov, k));
      canvas.include(d.sigma.back());
    }
    canvas.include(d.nominal);
    drawn.push_back(std::move(d));
  }

  std::vector<std::vector<Polygon>> robot_outlines;
  Polygon path;
  for (const auto& theta : trajectory) {
    const auto bodies = kinematics::posed_bodies(robot, kinematics::forward_kinematics(robot, theta));
    std::vector<Polygon> step;
    for (const auto& b : bodies) {
      step.push_back(outline(b.body, 48));
      canvas.include(step.back());
    }
    if (!bodies.empty()) {
      const Vec3 c = bodies.back().body.center();
      path.emplace_back(c.x(), c.y());
    }
    robot_outlines.push_back(std::move(step));
  }
  canvas.include(path);
  canvas.fit(800.0);

  std::ostringstream svg;
  svg.precision(6);
  const double top = 28.0;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << canvas.width() << "\" height=\""
      << canvas.height() + top << "\" viewBox=\"0 " << -top << " " << canvas.width() << " " << canvas.height() + top
      << "\">\n";
  svg << "<rect x=\"0\" y=\"" << -top << "\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"8\" y=\"-9\" font-family=\"sans-serif\" font-size=\"14\">" << escape(title) << "</text>\n";

  svg << "<g id=\"obstacles\">\n";
  for (const auto& d : drawn) {
    svg << "<g class=\"obstacle\"><title>" << escape(d.name) << "</title>\n";
    const double opacity[] = {0.9, 0.6, 0.35};
    for (std::size_t k = 0; k < d.sigma.size(); ++k) {
      svg << "<polygon class=\"sigma-" << k + 1 << "\" points=\"" << canvas.points(d.sigma[k])
          << "\" fill=\"none\" stroke=\"#d9822b\" stroke-dasharray=\"6,4\" stroke-opacity=\"" << opacity[k] << "\"/>\n";
    }
    svg << "<polygon class=\"nominal\" points=\"" << canvas.points(d.nominal)
        << "\" fill=\"#8a8a8a\" fill-opacity=\"0.6\" stroke=\"#404040\"/>\n</g>\n";
  }
  svg << "</g>\n<g id=\"robot\">\n";
  for (const auto& step : robot_outlines) {
    for (const auto& poly : step) {
      if (poly.size() == 1) {
        const Point q = canvas.map(poly.front());
        svg << "<circle cx=\"" << q.x() << "\" cy=\"" << q.y() << "\" r=\"2\" fill=\"#2b6cb0\" fill-opacity=\"0.5\"/>\n";
      } else {
        svg << "<polygon points=\"" << canvas.points(poly)
            << "\" fill=\"#2b6cb0\" fill-opacity=\"0.12\" stroke=\"#2b6cb0\" stroke-opacity=\"0.4\"/>\n";
      }
    }
  }
  svg << "</g>\n";
  if (!path.empty()) {
    svg << "<polyline id=\"path\" points=\"" << canvas.points(path)
        << "\" fill=\"none\" stroke=\"#1a365d\" stroke-width=\"2\"/>\n";
    const Point s = canvas.map(path.front());
    const Point g = canvas.map(path.back());
    svg << "<circle id=\"start\" cx=\"" << s.x() << "\" cy=\"" << s.y() << "\" r=\"5\" fill=\"#2f855a\"/>\n";
    svg << "<circle id=\"goal\" cx=\"" << g.x() << "\" cy=\"" << g.y() << "\" r=\"5\" fill=\"#c53030\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace ccopt::cli
