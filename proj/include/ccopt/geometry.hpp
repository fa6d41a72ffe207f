#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

// Convex geometry expressed through support mappings. Every body is a "core"
// convex set dilated by a ball of radius margin(): spheres and capsules have a
// point or segment core, polytopes a zero margin. Distance queries run GJK/EPA
// on the cores and account for margins analytically, which keeps sphere and
// capsule distances exact.

namespace ccopt::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rigid transform. Rotation must be orthonormal with determinant +1.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& r, const Vec3& t);

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  /// Roll-pitch-yaw (extrinsic x, y, z) rotation followed by translation.
  static Pose from_rpy(double roll, double pitch, double yaw, const Vec3& t = Vec3::Zero());

  Pose operator*(const Pose& rhs) const { return {rotation * rhs.rotation, rotation * rhs.translation + translation}; }
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  Pose inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }
};

/// {d : d^T Sigma^-1 d <= c} for a covariance acting on the first `dim`
/// coordinates. For dim == 2 the third row and column of the covariance must be
/// zero and the ellipsoid is flat in z.
class Ellipsoid {
 public:
  Ellipsoid(const Mat3& covariance, int dim, double squared_radius);

  const Mat3& covariance() const { return cov_; }
  int dim() const { return dim_; }
  double squared_radius() const { return c_; }
  /// Lower Cholesky factor of the covariance (zero outside the active block).
  const Mat3& cholesky() const { return chol_; }
  /// Sigma^-1 x restricted to the active block.
  Vec3 inverse_times(const Vec3& x) const { return cov_inv_ * x; }
  double mahalanobis_squared(const Vec3& x) const { return x.dot(cov_inv_ * x); }
  double max_stddev() const { return max_stddev_; }

  Ellipsoid with_squared_radius(double c) const;

  /// sqrt(c) Sigma v / sqrt(v^T Sigma v); the origin when v has no in-plane part.
  Vec3 support(const Vec3& direction) const;

 private:
  Mat3 cov_;
  Mat3 chol_;
  Mat3 cov_inv_;
  int dim_;
  double c_;
  double max_stddev_;
};

/// Ellipsoid cut by the half-space normal^T d >= 0.
class HalfEllipsoid {
 public:
  HalfEllipsoid(Ellipsoid ellipsoid, const Vec3& normal);

  const Ellipsoid& ellipsoid() const { return ellipsoid_; }
  const Vec3& normal() const { return normal_; }

  /// Exact maximizer of <v, d> over the half ellipsoid (closed form in the
  /// whitened coordinates u = L^-1 d).
  Vec3 support(const Vec3& direction) const;

 private:
  Ellipsoid ellipsoid_;
  Vec3 normal_;
};

/// Immutable handle to a convex set given by its support mapping.
class ConvexBody {
 public:
  struct Shape;

  static ConvexBody point(const Vec3& p);
  static ConvexBody sphere(const Vec3& center, double radius);
  /// Axis-aligned box centred at the origin. A zero half extent flattens the box.
  static ConvexBody box(const Vec3& half_extents);
  static ConvexBody polytope(std::vector<Vec3> vertices);
  static ConvexBody capsule(const Vec3& a, const Vec3& b, double radius);
  static ConvexBody ellipsoid(const Ellipsoid& e);
  static ConvexBody half_ellipsoid(const HalfEllipsoid& h);
  static ConvexBody minkowski_sum(const ConvexBody& a, const ConvexBody& b);

  ConvexBody posed(const Pose& pose) const;
  ConvexBody translated(const Vec3& offset) const;
  /// Image of the body under an invertible linear map.
  ConvexBody linear_map(const Mat3& map) const;

  /// Farthest point of the body in `direction`. Throws DomainError on a zero direction.
  Vec3 support(const Vec3& direction) const;
  /// Support of the core set (body eroded by margin()). Direction must be nonzero.
  Vec3 core_support(const Vec3& direction) const;
  double margin() const;
  /// A point in the relative interior of the core.
  Vec3 center() const;
  /// Vertices of the core when it is a finite polytope; empty otherwise.
  std::vector<Vec3> core_vertices() const;
  /// Radius of a ball about center() that encloses the whole body.
  double bounding_radius() const;
  std::string kind() const;

 private:
  explicit ConvexBody(std::shared_ptr<const Shape> shape) : shape_(std::move(shape)) {}
  std::shared_ptr<const Shape> shape_;
};

/// Signed distance between two bodies. Positive when separated; negative
/// penetration depth when overlapping. `normal` points from body A into body B.
struct DistanceResult {
  double signed_distance = 0.0;
  /// Certified lower bound on the signed distance; equals it up to the GJK tolerance.
  double lower_bound = 0.0;
  Vec3 witness_a = Vec3::Zero();
  Vec3 witness_b = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();
  int iterations = 0;
};

struct QueryOptions {
  /// Distances at or below this value count as contact (meters).
  double tolerance = 1e-9;
  /// Workspace dimension. Planar scenes (2) keep every query in the z = 0 plane.
  int dim = 3;
  /// GJK relative tolerance on the lower-bound gap.
  double gjk_relative_tolerance = 1e-9;
  int gjk_max_iterations = 128;
  /// GJK also stops once the distance bracket is narrower than this (meters).
  double gjk_absolute_tolerance = 1e-13;
  double epa_tolerance = 1e-9;
  int epa_max_faces = 255;
  /// When false, overlapping cores skip EPA and report
  /// signed_distance = -(margin_a + margin_b), an upper bound on the true value.
  bool compute_penetration = true;
  /// Stop as soon as the signed distance is known to be at most this value;
  /// the result then carries the current upper bound instead of the exact distance.
  double stop_below = -std::numeric_limits<double>::infinity();
  /// First GJK search direction, pointing from a toward b. Zero uses the
  /// offset between the body centers.
  Vec3 warm_start = Vec3::Zero();
};

DistanceResult distance(const ConvexBody& a, const ConvexBody& b, const QueryOptions& options = {});
bool intersects(const ConvexBody& a, const ConvexBody& b, const QueryOptions& options = {});
/// intersects(a, b.translated(b_offset)) without building the translated body.
bool intersects(const ConvexBody& a, const ConvexBody& b, const Vec3& b_offset, const QueryOptions& options = {});

/// Distance between the cores of two bodies (margins ignored); 0 when the cores overlap.
double core_distance(const ConvexBody& a, const ConvexBody& b, const QueryOptions& options = {});

/// Euclidean distance from a point to a body (0 when inside).
double point_distance(const Vec3& p, const ConvexBody& body, const QueryOptions& options = {});

}  // namespace ccopt::geometry
