#include <cmath>
#include <numbers>
#include <random>

#include "ccopt/error.hpp"
#include "ccopt/geometry.hpp"
#include "doctest.h"

using namespace ccopt;
using namespace ccopt::geometry;

namespace {

Vec3 random_unit(std::mt19937_64& rng, int dim = 3) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), dim == 3 ? g(rng) : 0.0);
  return v.normalized();
}

Mat3 random_spd(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat3 a = Mat3::Zero();
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = u(rng);
  Mat3 s = a * a.transpose();
  for (int i = 0; i < dim; ++i) s(i, i) += 0.1;
  return s;
}

// Distance from a point to an axis-aligned box by clamping; negative inside.
double box_point_oracle(const Vec3& h, const Vec3& p) {
  const Vec3 q = p.cwiseMax(-h).cwiseMin(h);
  const double out = (p - q).norm();
  if (out > 0.0) return out;
  return -(h - p.cwiseAbs()).minCoeff();
}

}  // namespace

TEST_CASE("basic supports") {
  CHECK(ConvexBody::sphere(Vec3::Zero(), 1.0).support(Vec3::UnitZ()).isApprox(Vec3::UnitZ()));
  CHECK(ConvexBody::box(Vec3::Ones()).support(Vec3::Ones()) == Vec3::Ones());
  const auto s = ConvexBody::sphere(Vec3::Zero(), 1.0);
  CHECK(ConvexBody::minkowski_sum(s, s).support(Vec3::UnitX()).isApprox(Vec3(2, 0, 0)));
  CHECK_THROWS_AS(s.support(Vec3::Zero()), DomainError);
  const auto cap = ConvexBody::capsule(Vec3(-1, 0, 0), Vec3(1, 0, 0), 0.5);
  CHECK(cap.support(Vec3(1, 1, 0)).isApprox(Vec3(1 + 0.5 / std::sqrt(2.0), 0.5 / std::sqrt(2.0), 0)));
}

TEST_CASE("ellipsoid support") {
  const Ellipsoid unit(Mat3::Identity(), 3, 1.0);
  CHECK(unit.support(Vec3::UnitZ()).isApprox(Vec3::UnitZ()));
  const Ellipsoid stretched(Vec3(4, 1, 1).asDiagonal(), 3, 1.0);
  CHECK(stretched.support(Vec3::UnitX()).isApprox(Vec3(2, 0, 0)));
  CHECK(unit.with_squared_radius(0.0).support(Vec3(0.3, -2, 1)) == Vec3::Zero());
  CHECK_THROWS_AS(unit.support(Vec3::Zero()), DomainError);

  Mat3 indefinite = Mat3::Identity();
  indefinite(2, 2) = -1.0;
  CHECK_THROWS_AS(Ellipsoid(indefinite, 3, 1.0), DomainError);
}

TEST_CASE("ellipsoid support matches a closed form on random inputs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat3 cov = random_spd(rng, 3);
    const double c = 0.1 + trial * 0.05;
    const Vec3 v = random_unit(rng) * (0.2 + trial);
    const Vec3 expect = std::sqrt(c) * cov * v / std::sqrt(v.dot(cov * v));
    CHECK((Ellipsoid(cov, 3, c).support(v) - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
  }
}

TEST_CASE("half-ellipsoid support") {
  const Ellipsoid unit(Mat3::Identity(), 3, 1.0);
  const HalfEllipsoid upper(unit, Vec3::UnitZ());
  CHECK(upper.support(Vec3::UnitZ()).isApprox(Vec3::UnitZ()));
  const Vec3 down = upper.support(-Vec3::UnitZ());
  CHECK(std::abs(down.z()) <= 1e-12);
  CHECK(down.norm() == doctest::Approx(1.0));

  Mat3 planar = Mat3::Zero();
  planar(0, 0) = planar(1, 1) = 1.0;
  const HalfEllipsoid right(Ellipsoid(planar, 2, 4.0), Vec3::UnitX());
  const Vec3 diag(std::cos(std::numbers::pi / 4), std::sin(std::numbers::pi / 4), 0.0);
  CHECK(right.support(diag).isApprox(Vec3(std::sqrt(2.0), std::sqrt(2.0), 0.0)));

  CHECK_THROWS_AS(HalfEllipsoid(unit, Vec3(0, 0, 2)), DomainError);
}

TEST_CASE("half-ellipsoid support is feasible and never dominated") {
  std::mt19937_64 rng(11);
  for (int dim : {2, 3}) {
    for (int trial = 0; trial < 12; ++trial) {
      const Mat3 cov = random_spd(rng, dim);
      const double c = 0.5 + trial;
      const Vec3 n = random_unit(rng, dim);
      const HalfEllipsoid h(Ellipsoid(cov, dim, c), n);
      const Vec3 v = random_unit(rng, dim);
      const Vec3 d = h.support(v);
      CHECK(d.dot(h.ellipsoid().inverse_times(d)) <= c + 1e-9);
      CHECK(n.dot(d) >= -1e-9);

      // Dense samples of the boundary: the ellipsoid surface plus the cut disc.
      const Mat3 l = h.ellipsoid().cholesky();
      double best = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < 100000; ++i) {
        Vec3 u = random_unit(rng, dim) * std::sqrt(c);
        Vec3 p = l * u;
        if (n.dot(p) < 0.0) {
          // Project onto the cut along the whitened normal direction.
          const Vec3 m = l.transpose() * n;
          u -= (u.dot(m) / m.squaredNorm()) * m;
          p = l * u;
        }
        best = std::max(best, v.dot(p));
      }
      CHECK(v.dot(d) >= best - 1e-9);
      CHECK(v.dot(d) <= best + 5e-3 * std::sqrt(c) * h.ellipsoid().max_stddev());
    }
  }
}

TEST_CASE("half-ellipsoid support stays on the cut for nearly antiparallel directions") {
  Mat3 cov;
  cov << 0.010, 0.002, 0.0, 0.002, 0.006, 0.001, 0.0, 0.001, 0.008;
  const Vec3 n = Vec3(0.0, 0.938828, -0.344387).normalized();
  const HalfEllipsoid h(Ellipsoid(cov, 3, 16.0), n);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (double scale : {1e-3, 1e-6, 1e-9, 1e-12, 1e-14}) {
    for (int i = 0; i < 2000; ++i) {
      const Vec3 v = -n + scale * Vec3(g(rng), g(rng), g(rng));
      const Vec3 d = h.support(v);
      CHECK(n.dot(d) >= -1e-12);
      CHECK(d.dot(h.ellipsoid().inverse_times(d)) <= 16.0 * (1 + 1e-12));
    }
  }
}

TEST_CASE("support is invariant to direction scaling") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lam(1e-3, 1e3);
  const std::vector<ConvexBody> bodies = {
      ConvexBody::box(Vec3(1, 2, 0.5)),
      ConvexBody::sphere(Vec3(1, 0, 0), 0.3),
      ConvexBody::capsule(Vec3(0, 0, 0), Vec3(0, 1, 1), 0.2),
      ConvexBody::ellipsoid(Ellipsoid(random_spd(rng, 3), 3, 2.0)),
      ConvexBody::half_ellipsoid(HalfEllipsoid(Ellipsoid(random_spd(rng, 3), 3, 2.0), Vec3::UnitY())),
  };
  for (int i = 0; i < 1000; ++i) {
    const auto& b = bodies[i % bodies.size()];
    const Vec3 v = random_unit(rng);
    const double l = lam(rng);
    CHECK((b.support(v) - b.support(l * v)).norm() <= 1e-12 * (1.0 + b.support(v).norm()));
  }
}

TEST_CASE("minkowski sum support adds component supports") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto a = ConvexBody::box(Vec3(0.5, 1.0, 0.2)).posed(Pose::from_rpy(0.1 * i, 0.3, -0.2, Vec3(1, 2, 3)));
    const auto b = ConvexBody::ellipsoid(Ellipsoid(random_spd(rng, 3), 3, 1.5));
    const Vec3 v = random_unit(rng);
    CHECK(ConvexBody::minkowski_sum(a, b).support(v) == a.support(v) + b.support(v));
  }
}

TEST_CASE("linear map support matches the mapped body") {
  std::mt19937_64 rng(9);
  const auto body = ConvexBody::capsule(Vec3(0, 0, 0), Vec3(1, 0.5, 0), 0.1);
  Mat3 map;
  map << 2, 0.3, 0, 0, 1, -0.4, 0.1, 0, 0.5;
  const auto mapped = body.linear_map(map);
  for (int i = 0; i < 200; ++i) {
    const Vec3 v = random_unit(rng);
    const Vec3 s = mapped.support(v);
    CHECK(v.dot(s) == doctest::Approx(v.dot(map * body.support(map.transpose() * v))).epsilon(1e-12));
  }
  CHECK_THROWS_AS(body.linear_map(Mat3::Zero()), DomainError);
}

TEST_CASE("distance reference cases") {
  const auto s1 = ConvexBody::sphere(Vec3::Zero(), 1.0);
  const auto s2 = ConvexBody::sphere(Vec3(3, 0, 0), 1.0);
  const auto r = distance(s1, s2);
  CHECK(r.signed_distance == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.normal.isApprox(Vec3::UnitX()));
  CHECK((r.witness_a - r.witness_b).norm() == doctest::Approx(1.0));

  const auto box = ConvexBody::box(Vec3::Ones());
  const auto rb = distance(box, ConvexBody::point(Vec3(3, 0, 0)));
  CHECK(rb.signed_distance == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((rb.witness_a - Vec3(1, 0, 0)).norm() <= 1e-9);

  const auto ro = distance(s1, ConvexBody::sphere(Vec3(1, 0, 0), 1.0));
  CHECK(ro.signed_distance == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(ro.normal.isApprox(Vec3::UnitX()));

  const auto same = distance(s1, s1);
  CHECK(same.signed_distance == doctest::Approx(-2.0));
  CHECK(same.normal.norm() == doctest::Approx(1.0));
}

TEST_CASE("intersects reference cases") {
  const auto s1 = ConvexBody::sphere(Vec3::Zero(), 1.0);
  CHECK_FALSE(intersects(s1, ConvexBody::sphere(Vec3(3, 0, 0), 1.0)));
  CHECK(intersects(s1, s1));
  const auto shadowish =
      ConvexBody::minkowski_sum(ConvexBody::sphere(Vec3::Zero(), 0.5), ConvexBody::ellipsoid(Ellipsoid(Mat3::Identity(), 3, 1.0)));
  CHECK_FALSE(intersects(shadowish, ConvexBody::box(Vec3::Ones()).translated(Vec3(10, 0, 0))));
  CHECK(intersects(shadowish, ConvexBody::box(Vec3::Ones()).translated(Vec3(2.4, 0, 0))));
  CHECK(intersects(s1, ConvexBody::sphere(Vec3(3, 0, 0), 1.0), Vec3(-1.5, 0, 0)));
}

TEST_CASE("sphere and box distances match closed forms") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> pos(0.1, 1.5);
  for (int i = 0; i < 300; ++i) {
    const Vec3 h(pos(rng), pos(rng), pos(rng));
    const Vec3 p(u(rng), u(rng), u(rng));
    const double r = 0.5 * pos(rng);
    const auto d = distance(ConvexBody::box(h), ConvexBody::sphere(p, r));
    CHECK(std::abs(d.signed_distance - (box_point_oracle(h, p) - r)) <= 1e-6);
    CHECK(intersects(ConvexBody::box(h), ConvexBody::sphere(p, r)) == (box_point_oracle(h, p) - r <= 1e-9));

    const Vec3 q(u(rng), u(rng), u(rng));
    const double r2 = pos(rng);
    const auto ds = distance(ConvexBody::sphere(p, r), ConvexBody::sphere(q, r2));
    CHECK(std::abs(ds.signed_distance - ((p - q).norm() - r - r2)) <= 1e-6);
  }
}

TEST_CASE("rotated box distance via local-frame oracle") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  for (int i = 0; i < 200; ++i) {
    const Pose pose = Pose::from_rpy(u(rng), u(rng), u(rng), Vec3(u(rng), u(rng), u(rng)));
    const Vec3 h(0.4, 0.9, 0.6);
    const Vec3 p(u(rng), u(rng), u(rng));
    const auto d = distance(ConvexBody::box(h).posed(pose), ConvexBody::point(p));
    CHECK(std::abs(d.signed_distance - box_point_oracle(h, pose.inverse() * p)) <= 1e-6);
  }
}

TEST_CASE("signed distance is continuous and monotone through contact") {
  const auto a = ConvexBody::box(Vec3(1, 0.5, 0.7)).posed(Pose::from_rpy(0.2, 0.1, 0.4));
  const auto b = ConvexBody::capsule(Vec3(0, -0.3, 0), Vec3(0, 0.3, 0.2), 0.25);
  const Vec3 dir = Vec3(1, 0.2, -0.1).normalized();
  double prev = std::numeric_limits<double>::infinity();
  // The line runs from separation to moderate overlap, stopping short of the
  // centers where the depth would start to shrink again.
  for (double s = 3.0; s >= 0.6; s -= 0.005) {
    const double d = distance(a, b.translated(s * dir)).signed_distance;
    CHECK(d <= prev + 1e-4);
    if (std::isfinite(prev)) CHECK(std::abs(d - prev) <= 0.005 + 1e-4);
    prev = d;
  }
}

TEST_CASE("penetration depth of nested polytopes") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int i = 0; i < 100; ++i) {
    const Vec3 h(1.0, 1.5, 2.0);
    const Vec3 p(u(rng), u(rng), u(rng));
    const auto d = distance(ConvexBody::box(h), ConvexBody::box(Vec3::Constant(0.1)).translated(p));
    // Depth to push the small box out through the nearest face.
    const double expect = ((h - p.cwiseAbs()).array() + 0.1).minCoeff();
    CHECK(d.signed_distance == doctest::Approx(-expect).epsilon(1e-9));
  }
}

TEST_CASE("planar queries stay in the plane") {
  QueryOptions opt;
  opt.dim = 2;
  Mat3 cov = Mat3::Zero();
  cov(0, 0) = 0.04;
  cov(1, 1) = 0.01;
  cov(0, 1) = cov(1, 0) = 0.01;
  const auto shadow = ConvexBody::minkowski_sum(ConvexBody::box(Vec3(0.3, 0.2, 0.0)), ConvexBody::ellipsoid(Ellipsoid(cov, 2, 3.0)));
  const auto r = distance(ConvexBody::point(Vec3(2, 1, 0)), shadow, opt);
  CHECK(r.signed_distance > 0.0);
  CHECK(std::abs(r.normal.z()) <= 1e-12);
  const auto pen = distance(ConvexBody::box(Vec3(1, 1, 0)), ConvexBody::box(Vec3(0.5, 0.5, 0)).translated(Vec3(0.8, 0, 0)), opt);
  CHECK(pen.signed_distance == doctest::Approx(-0.7));
  CHECK(pen.normal.isApprox(Vec3::UnitX()));
}

TEST_CASE("planar queries ignore out-of-plane extent") {
  QueryOptions opt;
  opt.dim = 2;
  const auto slab = ConvexBody::box(Vec3(0.3, 0.3, 0.3)).translated(Vec3(0, 0.2, 0));
  CHECK(distance(ConvexBody::point(Vec3(-0.2, 0, 0)), slab, opt).signed_distance == doctest::Approx(-0.1));
  CHECK(distance(ConvexBody::sphere(Vec3(-0.2, 0, 0), 0.05), slab, opt).signed_distance == doctest::Approx(-0.15));
  CHECK(distance(ConvexBody::point(Vec3(1.0, 0.2, 0.7)), slab, opt).signed_distance == doctest::Approx(0.7));
}

TEST_CASE("point distance") {
  const auto box = ConvexBody::box(Vec3::Ones());
  CHECK(point_distance(Vec3(0, 3, 0), box) == doctest::Approx(2.0));
  CHECK(point_distance(Vec3(0.5, 0, 0), box) == 0.0);
  CHECK(point_distance(Vec3(0, 0, 4), ConvexBody::sphere(Vec3::Zero(), 1.0)) == doctest::Approx(3.0));
}

TEST_CASE("pose validation") {
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = -1.0;
  CHECK_THROWS_AS(Pose(bad, Vec3::Zero()), DomainError);
  const Pose p = Pose::from_rpy(0.3, -0.2, 1.1, Vec3(1, 2, 3));
  CHECK(((p * p.inverse()) * Vec3(4, 5, 6) - Vec3(4, 5, 6)).norm() <= 1e-12);
}
