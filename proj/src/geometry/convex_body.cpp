#include <algorithm>
#include <cmath>

#include "ccopt/error.hpp"
#include "ccopt/geometry.hpp"

namespace ccopt::geometry {

namespace {

void require_nonzero(const Vec3& v) {
  if (!(v.squaredNorm() > 0.0) || !v.allFinite()) {
    throw DomainError("support direction must be finite and nonzero");
  }
}

}  // namespace

Pose::Pose(const Mat3& r, const Vec3& t) : rotation(r), translation(t) {
  const double orth_err = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(orth_err < 1e-9) || !(std::abs(r.determinant() - 1.0) < 1e-9)) {
    throw DomainError("pose rotation must be orthonormal with determinant +1");
  }
  if (!t.allFinite()) throw DomainError("pose translation must be finite");
}

Pose Pose::from_rpy(double roll, double pitch, double yaw, const Vec3& t) {
  const Mat3 r = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                  Eigen::AngleAxisd(roll, Vec3::UnitX()))
                     .toRotationMatrix();
  return {r, t};
}

// --- Ellipsoid ---------------------------------------------------------------

Ellipsoid::Ellipsoid(const Mat3& covariance, int dim, double squared_radius)
    : cov_(covariance), chol_(Mat3::Zero()), cov_inv_(Mat3::Zero()), dim_(dim), c_(squared_radius) {
  if (dim != 2 && dim != 3) throw DomainError("ellipsoid dimension must be 2 or 3");
  if (!(squared_radius >= 0.0) || !std::isfinite(squared_radius)) {
    throw DomainError("ellipsoid squared radius must be finite and nonnegative");
  }
  if (!covariance.allFinite() || (covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + covariance.cwiseAbs().maxCoeff())) {
    throw DomainError("covariance must be finite and symmetric");
  }
  if (dim == 2 && (covariance.row(2).cwiseAbs().maxCoeff() != 0.0 || covariance.col(2).cwiseAbs().maxCoeff() != 0.0)) {
    throw DomainError("planar covariance must have zero third row and column");
  }
  const Eigen::MatrixXd block = covariance.topLeftCorner(dim, dim);
  Eigen::LLT<Eigen::MatrixXd> llt(block);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block);
  if (llt.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0) {
    throw DomainError("covariance must be positive definite");
  }
  chol_.topLeftCorner(dim, dim) = llt.matrixL();
  cov_inv_.topLeftCorner(dim, dim) = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
  max_stddev_ = std::sqrt(eig.eigenvalues().maxCoeff());
}

Ellipsoid Ellipsoid::with_squared_radius(double c) const {
  Ellipsoid e = *this;
  if (!(c >= 0.0) || !std::isfinite(c)) throw DomainError("ellipsoid squared radius must be finite and nonnegative");
  e.c_ = c;
  return e;
}

Vec3 Ellipsoid::support(const Vec3& direction) const {
  require_nonzero(direction);
  if (c_ == 0.0) return Vec3::Zero();
  const Vec3 sv = cov_ * direction;
  const double q = direction.dot(sv);
  if (!(q > 0.0)) return Vec3::Zero();
  return std::sqrt(c_ / q) * sv;
}

// --- HalfEllipsoid -----------------------------------------------------------

HalfEllipsoid::HalfEllipsoid(Ellipsoid ellipsoid, const Vec3& normal) : ellipsoid_(std::move(ellipsoid)), normal_(normal) {
  if (!normal.allFinite() || std::abs(normal.norm() - 1.0) > 1e-9) {
    throw DomainError("half-ellipsoid normal must be a unit vector");
  }
  if (ellipsoid_.dim() == 2 && std::abs(normal.z()) > 1e-9) {
    throw DomainError("planar half-ellipsoid normal must lie in the z = 0 plane");
  }
}

Vec3 HalfEllipsoid::support(const Vec3& direction) const {
  require_nonzero(direction);
  const double c = ellipsoid_.squared_radius();
  if (c == 0.0) return Vec3::Zero();
  const Mat3& chol = ellipsoid_.cholesky();
  const Vec3 w = chol.transpose() * direction;
  const Vec3 m = chol.transpose() * normal_;
  const double w_norm = w.norm();
  if (!(w_norm > 0.0)) return Vec3::Zero();
  const double rc = std::sqrt(c);
  if (m.dot(w) >= 0.0) return chol * (rc / w_norm * w);

  const double m_sq = m.squaredNorm();
  Vec3 w_slice = w - (w.dot(m) / m_sq) * m;
  // Second projection pass: the first one cancels badly when w is nearly antiparallel to m.
  w_slice -= (w_slice.dot(m) / m_sq) * m;
  const double slice_norm = w_slice.norm();
  if (slice_norm > 1e-8 * w_norm) return chol * (rc / slice_norm * w_slice);

  // Direction antiparallel to the cut in whitened space: every rim point ties.
  // Pick the first coordinate axis projected into the slice.
  for (int axis = 0; axis < ellipsoid_.dim(); ++axis) {
    const Vec3 e = Vec3::Unit(axis);
    const Vec3 e_slice = e - (e.dot(m) / m_sq) * m;
    const double n = e_slice.norm();
    if (n > 1e-6) return chol * (rc / n * e_slice);
  }
  return Vec3::Zero();
}

// --- Shapes ------------------------------------------------------------------

struct ConvexBody::Shape {
  virtual ~Shape() = default;
  virtual Vec3 core_support(const Vec3& v) const = 0;
  virtual double margin() const { return 0.0; }
  virtual Vec3 center() const = 0;
  virtual void core_vertices(std::vector<Vec3>& /*out*/, bool& finite) const { finite = false; }
  virtual double bounding_radius() const = 0;
  virtual std::string kind() const = 0;
};

namespace {

struct PolytopeShape final : ConvexBody::Shape {
  std::vector<Vec3> vertices;
  double radius;
  std::string name;

  PolytopeShape(std::vector<Vec3> verts, double r, std::string n) : vertices(std::move(verts)), radius(r), name(std::move(n)) {}

  Vec3 core_support(const Vec3& v) const override {
    std::size_t best = 0;
    double best_dot = vertices[0].dot(v);
    for (std::size_t i = 1; i < vertices.size(); ++i) {
      const double d = vertices[i].dot(v);
      if (d > best_dot) {
        best_dot = d;
        best = i;
      }
    }
    return vertices[best];
  }
  double margin() const override { return radius; }
  Vec3 center() const override {
    Vec3 c = Vec3::Zero();
    for (const auto& p : vertices) c += p;
    return c / static_cast<double>(vertices.size());
  }
  void core_vertices(std::vector<Vec3>& out, bool& finite) const override {
    out.insert(out.end(), vertices.begin(), vertices.end());
    finite = true;
  }
  double bounding_radius() const override {
    const Vec3 c = center();
    double r = 0.0;
    for (const auto& p : vertices) r = std::max(r, (p - c).norm());
    return r + radius;
  }
  std::string kind() const override { return name; }
};

struct EllipsoidShape final : ConvexBody::Shape {
  Ellipsoid e;
  explicit EllipsoidShape(Ellipsoid el) : e(std::move(el)) {}
  Vec3 core_support(const Vec3& v) const override { return e.support(v); }
  Vec3 center() const override { return Vec3::Zero(); }
  double bounding_radius() const override { return std::sqrt(e.squared_radius()) * e.max_stddev(); }
  std::string kind() const override { return "ellipsoid"; }
};

struct HalfEllipsoidShape final : ConvexBody::Shape {
  HalfEllipsoid h;
  explicit HalfEllipsoidShape(HalfEllipsoid he) : h(std::move(he)) {}
  Vec3 core_support(const Vec3& v) const override { return h.support(v); }
  Vec3 center() const override {
    // Interior point of the half ellipsoid: a small step along the cut normal.
    const double c = h.ellipsoid().squared_radius();
    if (c == 0.0) return Vec3::Zero();
    return 0.5 * h.support(h.normal());
  }
  double bounding_radius() const override {
    return std::sqrt(h.ellipsoid().squared_radius()) * h.ellipsoid().max_stddev() + center().norm();
  }
  std::string kind() const override { return "half_ellipsoid"; }
};

struct PosedShape final : ConvexBody::Shape {
  Pose pose;
  std::shared_ptr<const ConvexBody::Shape> inner;
  PosedShape(Pose p, std::shared_ptr<const ConvexBody::Shape> s) : pose(std::move(p)), inner(std::move(s)) {}
  Vec3 core_support(const Vec3& v) const override {
    return pose * inner->core_support(pose.rotation.transpose() * v);
  }
  double margin() const override { return inner->margin(); }
  Vec3 center() const override { return pose * inner->center(); }
  void core_vertices(std::vector<Vec3>& out, bool& finite) const override {
    std::vector<Vec3> local;
    inner->core_vertices(local, finite);
    for (const auto& p : local) out.push_back(pose * p);
  }
  double bounding_radius() const override { return inner->bounding_radius(); }
  std::string kind() const override { return inner->kind(); }
};

struct LinearMapShape final : ConvexBody::Shape {
  Mat3 map;
  std::shared_ptr<const ConvexBody::Shape> inner;
  LinearMapShape(const Mat3& m, std::shared_ptr<const ConvexBody::Shape> s) : map(m), inner(std::move(s)) {}
  // The margin ball is no longer a ball after the map, so it joins the core.
  Vec3 core_support(const Vec3& v) const override {
    const Vec3 w = map.transpose() * v;
    Vec3 p = inner->core_support(w);
    const double r = inner->margin();
    if (r != 0.0) p += (r / w.norm()) * w;
    return map * p;
  }
  Vec3 center() const override { return map * inner->center(); }
  void core_vertices(std::vector<Vec3>& out, bool& finite) const override {
    if (inner->margin() != 0.0) {
      finite = false;
      return;
    }
    std::vector<Vec3> local;
    inner->core_vertices(local, finite);
    for (const auto& p : local) out.push_back(map * p);
  }
  double bounding_radius() const override {
    return Eigen::JacobiSVD<Mat3>(map).singularValues()[0] * (inner->bounding_radius() + inner->margin());
  }
  std::string kind() const override { return inner->kind(); }
};

struct SumShape final : ConvexBody::Shape {
  std::shared_ptr<const ConvexBody::Shape> a;
  std::shared_ptr<const ConvexBody::Shape> b;
  SumShape(std::shared_ptr<const ConvexBody::Shape> x, std::shared_ptr<const ConvexBody::Shape> y) : a(std::move(x)), b(std::move(y)) {}
  Vec3 core_support(const Vec3& v) const override { return a->core_support(v) + b->core_support(v); }
  double margin() const override { return a->margin() + b->margin(); }
  Vec3 center() const override { return a->center() + b->center(); }
  void core_vertices(std::vector<Vec3>& out, bool& finite) const override {
    std::vector<Vec3> va, vb;
    bool fa = false, fb = false;
    a->core_vertices(va, fa);
    b->core_vertices(vb, fb);
    finite = fa && fb;
    if (!finite) return;
    for (const auto& p : va) {
      for (const auto& q : vb) out.push_back(p + q);
    }
  }
  double bounding_radius() const override { return a->bounding_radius() + b->bounding_radius(); }
  std::string kind() const override { return "minkowski_sum"; }
};

}  // namespace

ConvexBody ConvexBody::point(const Vec3& p) { return sphere(p, 0.0); }

ConvexBody ConvexBody::sphere(const Vec3& center, double radius) {
  if (!(radius >= 0.0) || !std::isfinite(radius) || !center.allFinite()) {
    throw DomainError("sphere needs a finite center and a nonnegative radius");
  }
  return ConvexBody(std::make_shared<PolytopeShape>(std::vector<Vec3>{center}, radius, radius == 0.0 ? "point" : "sphere"));
}

ConvexBody ConvexBody::box(const Vec3& half_extents) {
  if (!half_extents.allFinite() || half_extents.minCoeff() < 0.0) {
    throw DomainError("box half extents must be finite and nonnegative");
  }
  std::vector<Vec3> verts;
  for (int i = 0; i < 8; ++i) {
    const Vec3 s((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
    const Vec3 p = s.cwiseProduct(half_extents);
    bool dup = false;
    for (const auto& q : verts) dup = dup || q == p;
    if (!dup) verts.push_back(p);
  }
  return ConvexBody(std::make_shared<PolytopeShape>(std::move(verts), 0.0, "box"));
}

ConvexBody ConvexBody::polytope(std::vector<Vec3> vertices) {
  if (vertices.empty()) throw DomainError("polytope needs at least one vertex");
  for (const auto& v : vertices) {
    if (!v.allFinite()) throw DomainError("polytope vertices must be finite");
  }
  return ConvexBody(std::make_shared<PolytopeShape>(std::move(vertices), 0.0, "convex_hull"));
}

ConvexBody ConvexBody::capsule(const Vec3& a, const Vec3& b, double radius) {
  if (!(radius >= 0.0) || !a.allFinite() || !b.allFinite()) {
    throw DomainError("capsule needs finite endpoints and a nonnegative radius");
  }
  return ConvexBody(std::make_shared<PolytopeShape>(std::vector<Vec3>{a, b}, radius, "capsule"));
}

ConvexBody ConvexBody::ellipsoid(const Ellipsoid& e) { return ConvexBody(std::make_shared<EllipsoidShape>(e)); }

ConvexBody ConvexBody::half_ellipsoid(const HalfEllipsoid& h) {
  return ConvexBody(std::make_shared<HalfEllipsoidShape>(h));
}

ConvexBody ConvexBody::minkowski_sum(const ConvexBody& a, const ConvexBody& b) {
  return ConvexBody(std::make_shared<SumShape>(a.shape_, b.shape_));
}

ConvexBody ConvexBody::posed(const Pose& pose) const { return ConvexBody(std::make_shared<PosedShape>(pose, shape_)); }

ConvexBody ConvexBody::translated(const Vec3& offset) const { return posed(Pose::from_translation(offset)); }

ConvexBody ConvexBody::linear_map(const Mat3& map) const {
  if (!map.allFinite() || map.determinant() == 0.0) throw DomainError("linear map must be finite and invertible");
  return ConvexBody(std::make_shared<LinearMapShape>(map, shape_));
}

Vec3 ConvexBody::support(const Vec3& direction) const {
  require_nonzero(direction);
  const Vec3 core = shape_->core_support(direction);
  const double r = shape_->margin();
  if (r == 0.0) return core;
  return core + (r / direction.norm()) * direction;
}

Vec3 ConvexBody::core_support(const Vec3& direction) const { return shape_->core_support(direction); }

double ConvexBody::margin() const { return shape_->margin(); }

Vec3 ConvexBody::center() const { return shape_->center(); }

std::vector<Vec3> ConvexBody::core_vertices() const {
  std::vector<Vec3> out;
  bool finite = false;
  shape_->core_vertices(out, finite);
  if (!finite) out.clear();
  return out;
}

double ConvexBody::bounding_radius() const { return shape_->bounding_radius(); }

std::string ConvexBody::kind() const { return shape_->kind(); }

}  // namespace ccopt::geometry
