#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "ccopt/error.hpp"
#include "ccopt/geometry.hpp"

namespace ccopt::geometry {

namespace {

struct SupportPoint {
  Vec3 w;  // a - b
  Vec3 a;
  Vec3 b;
};

// Support mapping of the core Minkowski difference A - (B + offset).
class CoreDifference {
 public:
  CoreDifference(const ConvexBody& a, const ConvexBody& b, const Vec3& offset, int dim)
      : a_(a), b_(b), offset_(offset), dim_(dim) {}

  SupportPoint support(Vec3 d) const {
    if (dim_ == 2) d.z() = 0.0;
    SupportPoint s;
    s.a = a_.core_support(d);
    s.b = b_.core_support(-d) + offset_;
    // Planar queries ignore the out-of-plane extent of both bodies.
    if (dim_ == 2) s.b.z() = s.a.z();
    s.w = s.a - s.b;
    return s;
  }

  Vec3 center_offset() const { return b_.center() + offset_ - a_.center(); }
  int dim() const { return dim_; }

 private:
  const ConvexBody& a_;
  const ConvexBody& b_;
  Vec3 offset_;
  int dim_;
};

struct Simplex {
  std::array<SupportPoint, 4> pts;
  std::array<double, 4> lambda{};
  int size = 0;
};

// Affine coordinates of the point of aff(p0, ..., pQ) nearest the origin.
template <int Q>
bool affine_solve(const Simplex& s, const std::array<int, 4>& idx, Vec3& mu) {
  const Vec3& p0 = s.pts[idx[0]].w;
  Eigen::Matrix<double, 3, Q> e;
  for (int j = 0; j < Q; ++j) e.col(j) = s.pts[idx[j + 1]].w - p0;
  const Eigen::Matrix<double, Q, Q> gram = e.transpose() * e;
  const Eigen::LDLT<Eigen::Matrix<double, Q, Q>> ldlt(gram);
  const auto d = ldlt.vectorD();
  if (!(d.minCoeff() > 1e-14 * gram.diagonal().maxCoeff())) return false;
  mu.head<Q>() = ldlt.solve(-e.transpose() * p0);
  return true;
}

// Nearest point of conv(simplex) to the origin by enumerating faces: each
// subset's affine minimizer is kept when all its barycentric weights are
// positive, and the smallest such point wins. The simplex is reduced to the
// winning subset.
Vec3 closest_on_simplex(Simplex& s) {
  const int n = s.size;
  double best_sq = std::numeric_limits<double>::infinity();
  int best_mask = 0;
  std::array<double, 4> best_lambda{};
  Vec3 best = Vec3::Zero();

  for (int m = 1; m <= n; ++m) {
    for (int mask = 1; mask < (1 << n); ++mask) {
      if (__builtin_popcount(static_cast<unsigned>(mask)) != m) continue;
      std::array<int, 4> idx{};
      int k = 0;
      for (int i = 0; i < n; ++i) {
        if (mask & (1 << i)) idx[k++] = i;
      }
      std::array<double, 4> lam{};
      if (m == 1) {
        lam[0] = 1.0;
      } else {
        const int q = m - 1;
        Vec3 mu = Vec3::Zero();
        const bool solved = q == 1   ? affine_solve<1>(s, idx, mu)
                            : q == 2 ? affine_solve<2>(s, idx, mu)
                                     : affine_solve<3>(s, idx, mu);
        if (!solved) continue;
        double sum = 0.0;
        bool positive = true;
        for (int j = 0; j < q; ++j) {
          lam[j + 1] = mu[j];
          sum += mu[j];
          positive = positive && mu[j] > 0.0;
        }
        lam[0] = 1.0 - sum;
        if (!positive || !(lam[0] > 0.0)) continue;
      }
      Vec3 x = Vec3::Zero();
      for (int j = 0; j < m; ++j) x += lam[j] * s.pts[idx[j]].w;
      const double sq = x.squaredNorm();
      if (sq < best_sq) {
        best_sq = sq;
        best_mask = mask;
        best = x;
        best_lambda = lam;
      }
    }
  }

  Simplex reduced;
  int k = 0;
  for (int i = 0; i < n; ++i) {
    if (best_mask & (1 << i)) {
      reduced.pts[k] = s.pts[i];
      reduced.lambda[k] = best_lambda[k];
      ++k;
    }
  }
  reduced.size = k;
  s = reduced;
  return best;
}

struct GjkResult {
  bool overlap = false;
  bool separated_early = false;
  double distance = 0.0;  // core distance when !overlap
  Vec3 v = Vec3::Zero();
  Simplex simplex;
  int iterations = 0;
  double scale = 1.0;
  double lower = 0.0;  // certified lower bound on the core distance
};

// Widest lower/upper bracket accepted when GJK stops without meeting its
// tolerances, relative to the size of the difference body.
constexpr double kLooseTolerance = 1e-6;

// GJK on the core difference. When `separation_bound` is nonnegative the
// search stops as soon as the lower bound on the core distance exceeds it.
bool gjk_attempt(const CoreDifference& diff, const Vec3& seed, const QueryOptions& opt, double separation_bound,
                 double stop_below_core, GjkResult& out) {
  Simplex s;
  s.pts[0] = diff.support(seed);
  s.lambda[0] = 1.0;
  s.size = 1;
  Vec3 v = s.pts[0].w;
  const double scale = std::max(1.0, v.norm());
  const double abs_eps = 1e-12 * scale;
  out.scale = scale;

  for (int iter = 1; iter <= opt.gjk_max_iterations; ++iter) {
    out.iterations = iter;
    const double vv = v.squaredNorm();
    if (vv <= abs_eps * abs_eps) {
      out.overlap = true;
      out.distance = 0.0;
      out.lower = 0.0;
      out.v = v;
      out.simplex = s;
      return true;
    }
    if (vv <= stop_below_core * stop_below_core && stop_below_core > 0.0) {
      out.distance = std::sqrt(vv);
      out.v = v;
      out.simplex = s;
      return true;
    }
    const SupportPoint w = diff.support(-v);
    const double vw = v.dot(w.w);
    if (separation_bound >= 0.0 && vw > 0.0 && vw * vw > separation_bound * separation_bound * vv) {
      out.separated_early = true;
      out.distance = std::sqrt(vv);
      out.v = v;
      out.simplex = s;
      return true;
    }
    const double vn = std::sqrt(vv);
    out.lower = std::max(out.lower, vw / vn);
    const double gap = vv - vw;
    bool duplicate = false;
    for (int i = 0; i < s.size; ++i) duplicate = duplicate || (s.pts[i].w - w.w).squaredNorm() <= abs_eps * abs_eps;
    if (gap <= opt.gjk_relative_tolerance * vv || gap <= opt.gjk_absolute_tolerance * vn || duplicate) {
      out.distance = std::sqrt(vv);
      out.v = v;
      out.simplex = s;
      return true;
    }
    if (s.size == 4) {
      // A full simplex whose nearest point is not the origin is degenerate.
      out.distance = std::sqrt(vv);
      out.v = v;
      out.simplex = s;
      return vn - out.lower <= kLooseTolerance * scale;
    }
    Simplex trial = s;
    trial.pts[trial.size++] = w;
    const Vec3 v_new = closest_on_simplex(trial);
    if (!v_new.allFinite()) return false;
    if (v_new.squaredNorm() >= vv) {
      // No progress: the current estimate is as good as this search gets.
      out.distance = std::sqrt(vv);
      out.v = v;
      out.simplex = s;
      return vn - out.lower <= kLooseTolerance * scale;
    }
    s = trial;
    v = v_new;
  }
  // Near contact with curved bodies the bound gap stalls at rounding level;
  // the bracket is still usable when it is narrow.
  const double vn = v.norm();
  out.distance = vn;
  out.v = v;
  out.simplex = s;
  return vn - out.lower <= kLooseTolerance * scale;
}

GjkResult run_gjk(const CoreDifference& diff, const QueryOptions& opt, double separation_bound,
                  double stop_below_core = -1.0) {
  const Vec3 c = diff.center_offset();
  std::array<Vec3, 5> seeds;
  std::size_t n = 0;
  if (opt.warm_start.squaredNorm() > 0.0) seeds[n++] = opt.warm_start;
  if (c.squaredNorm() > 0.0) seeds[n++] = c;
  seeds[n++] = Vec3::UnitX();
  seeds[n++] = Vec3(0.6, 0.8, 0.0);
  seeds[n++] = diff.dim() == 2 ? Vec3(-0.28, 0.96, 0.0) : Vec3(0.48, -0.36, 0.8);
  GjkResult r;
  for (std::size_t i = 0; i < n; ++i) {
    r = GjkResult{};
    if (gjk_attempt(diff, seeds[i], opt, separation_bound, stop_below_core, r)) return r;
  }
  std::ostringstream msg;
  msg << "GJK did not converge within " << opt.gjk_max_iterations << " iterations (last distance estimate "
      << r.v.norm() << ")";
  throw NumericalError(msg.str());
}

// --- EPA --------------------------------------------------------------------

struct PenetrationResult {
  double depth = 0.0;
  Vec3 normal = Vec3::UnitX();
  Vec3 witness_a = Vec3::Zero();
  Vec3 witness_b = Vec3::Zero();
};

Vec3 planar_perp(const Vec3& d) { return {-d.y(), d.x(), 0.0}; }

class OriginEncloser {
 public:
  OriginEncloser(const CoreDifference& diff, double scale) : diff_(diff), eps_(1e-10 * scale) {}

  bool enclose(std::vector<SupportPoint>& pts) {
    for (const auto& p : pts) probes_.push_back(p.w);
    return diff_.dim() == 2 ? enclose2(pts) : enclose3(pts);
  }

  const std::vector<Vec3>& probes() const { return probes_; }

 private:
  bool try_push(std::vector<SupportPoint>& pts, const Vec3& dir, bool planar) {
    pts.push_back(diff_.support(dir));
    probes_.push_back(pts.back().w);
    if (planar ? enclose2(pts) : enclose3(pts)) return true;
    pts.pop_back();
    return false;
  }

  bool enclose3(std::vector<SupportPoint>& pts) {
    switch (pts.size()) {
      case 1:
        for (int i = 0; i < 3; ++i) {
          if (try_push(pts, Vec3::Unit(i), false) || try_push(pts, -Vec3::Unit(i), false)) return true;
        }
        return false;
      case 2: {
        const Vec3 d = pts[1].w - pts[0].w;
        if (d.norm() <= eps_) return false;
        for (int i = 0; i < 3; ++i) {
          const Vec3 p = d.cross(Vec3::Unit(i));
          if (p.norm() <= 1e-12 * d.norm()) continue;
          if (try_push(pts, p, false) || try_push(pts, -p, false)) return true;
        }
        return false;
      }
      case 3: {
        const Vec3 n = (pts[1].w - pts[0].w).cross(pts[2].w - pts[0].w);
        if (n.norm() <= eps_ * eps_) return false;
        return try_push(pts, n, false) || try_push(pts, -n, false);
      }
      case 4: {
        const Vec3 e1 = pts[0].w - pts[3].w;
        const Vec3 e2 = pts[1].w - pts[3].w;
        const Vec3 e3 = pts[2].w - pts[3].w;
        const double det = e1.dot(e2.cross(e3));
        return std::abs(det) > 1e-10 * e1.norm() * e2.norm() * e3.norm() && std::abs(det) > eps_ * eps_ * eps_;
      }
      default:
        return false;
    }
  }

  bool enclose2(std::vector<SupportPoint>& pts) {
    switch (pts.size()) {
      case 1:
        for (int i = 0; i < 2; ++i) {
          if (try_push(pts, Vec3::Unit(i), true) || try_push(pts, -Vec3::Unit(i), true)) return true;
        }
        return false;
      case 2: {
        const Vec3 d = pts[1].w - pts[0].w;
        if (d.norm() <= eps_) return false;
        const Vec3 p = planar_perp(d);
        return try_push(pts, p, true) || try_push(pts, -p, true);
      }
      case 3: {
        const Vec3 e1 = pts[1].w - pts[0].w;
        const Vec3 e2 = pts[2].w - pts[0].w;
        const double area = e1.x() * e2.y() - e1.y() * e2.x();
        return std::abs(area) > 1e-10 * e1.norm() * e2.norm() && std::abs(area) > eps_ * eps_;
      }
      default:
        return false;
    }
  }

  const CoreDifference& diff_;
  double eps_;
  std::vector<Vec3> probes_;
};

// Cores overlap but their difference is flat (lower dimensional): the depth is
// zero along any normal of the flat hull. Prefer the one closest to the
// direction from A towards B.
PenetrationResult flat_penetration(const CoreDifference& diff, const std::vector<Vec3>& probes, const GjkResult& g) {
  const int dim = diff.dim();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(probes.size()), dim);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    for (int j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(i), j) = probes[i][j] - probes[0][j];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv[0] : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv[i] > 1e-8 * std::max(smax, 1e-300) && sv[i] > 1e-14 ? 1 : 0;

  Vec3 pref = diff.center_offset();
  if (dim == 2) pref.z() = 0.0;
  Vec3 normal = Vec3::Zero();
  for (int col = rank; col < dim; ++col) {
    Vec3 u = Vec3::Zero();
    for (int j = 0; j < dim; ++j) u[j] = svd.matrixV()(j, col);
    normal += u.dot(pref) * u;
  }
  if (normal.norm() <= 1e-12) {
    normal.setZero();
    for (int j = 0; j < dim; ++j) normal[j] = svd.matrixV()(j, dim - 1);
  }
  normal.normalize();

  PenetrationResult r;
  r.depth = 0.0;
  r.normal = normal;
  for (int i = 0; i < g.simplex.size; ++i) {
    r.witness_a += g.simplex.lambda[i] * g.simplex.pts[i].a;
    r.witness_b += g.simplex.lambda[i] * g.simplex.pts[i].b;
  }
  return r;
}

PenetrationResult epa3(const CoreDifference& diff, std::vector<SupportPoint> verts, const QueryOptions& opt) {
  struct Face {
    int v[3];
    Vec3 n;
    double d;
    bool alive;
  };
  std::vector<Face> faces;
  const Vec3 centroid = 0.25 * (verts[0].w + verts[1].w + verts[2].w + verts[3].w);

  auto make_face = [&](int a, int b, int c, const Vec3& interior) -> bool {
    Vec3 n = (verts[b].w - verts[a].w).cross(verts[c].w - verts[a].w);
    const double len = n.norm();
    if (!(len > 0.0)) return false;
    n /= len;
    if (n.dot(verts[a].w - interior) < 0.0) {
      std::swap(b, c);
      n = -n;
    }
    faces.push_back({{a, b, c}, n, n.dot(verts[a].w), true});
    return true;
  };
  make_face(0, 1, 2, centroid);
  make_face(0, 1, 3, centroid);
  make_face(0, 2, 3, centroid);
  make_face(1, 2, 3, centroid);

  for (int iter = 0;; ++iter) {
    int best = -1;
    int alive = 0;
    for (int i = 0; i < static_cast<int>(faces.size()); ++i) {
      if (!faces[i].alive) continue;
      ++alive;
      if (best < 0 || faces[i].d < faces[best].d) best = i;
    }
    if (alive > opt.epa_max_faces || best < 0) {
      std::ostringstream msg;
      msg << "EPA exceeded " << opt.epa_max_faces << " faces after " << iter << " expansions";
      throw NumericalError(msg.str());
    }
    const Face f = faces[best];
    const SupportPoint w = diff.support(f.n);
    const double growth = f.n.dot(w.w) - f.d;
    if (growth <= opt.epa_tolerance) {
      PenetrationResult r;
      r.depth = std::max(0.0, f.d);
      r.normal = f.n;
      const Vec3 p = f.n * f.d;
      const Vec3& a = verts[f.v[0]].w;
      const Vec3 e0 = verts[f.v[1]].w - a;
      const Vec3 e1 = verts[f.v[2]].w - a;
      const Vec3 e2 = p - a;
      const double d00 = e0.dot(e0), d01 = e0.dot(e1), d11 = e1.dot(e1);
      const double d20 = e2.dot(e0), d21 = e2.dot(e1);
      const double den = d00 * d11 - d01 * d01;
      double l1 = den > 0.0 ? (d11 * d20 - d01 * d21) / den : 0.0;
      double l2 = den > 0.0 ? (d00 * d21 - d01 * d20) / den : 0.0;
      double l0 = 1.0 - l1 - l2;
      r.witness_a = l0 * verts[f.v[0]].a + l1 * verts[f.v[1]].a + l2 * verts[f.v[2]].a;
      r.witness_b = l0 * verts[f.v[0]].b + l1 * verts[f.v[1]].b + l2 * verts[f.v[2]].b;
      return r;
    }

    const int wi = static_cast<int>(verts.size());
    verts.push_back(w);
    std::vector<std::pair<int, int>> horizon;
    for (auto& face : faces) {
      if (!face.alive) continue;
      if (face.n.dot(w.w - verts[face.v[0]].w) <= 1e-12 * std::max(1.0, std::abs(face.d))) continue;
      face.alive = false;
      for (int e = 0; e < 3; ++e) {
        const std::pair<int, int> edge{face.v[e], face.v[(e + 1) % 3]};
        const auto twin = std::find(horizon.begin(), horizon.end(), std::pair<int, int>{edge.second, edge.first});
        if (twin != horizon.end()) {
          horizon.erase(twin);
        } else {
          horizon.push_back(edge);
        }
      }
    }
    for (const auto& [a, b] : horizon) {
      Vec3 n = (verts[b].w - verts[a].w).cross(w.w - verts[a].w);
      const double len = n.norm();
      if (!(len > 0.0)) continue;
      n /= len;
      faces.push_back({{a, b, wi}, n, n.dot(verts[a].w), true});
    }
  }
}

PenetrationResult epa2(const CoreDifference& diff, std::vector<SupportPoint> verts, const QueryOptions& opt) {
  const Vec3 e1 = verts[1].w - verts[0].w;
  const Vec3 e2 = verts[2].w - verts[0].w;
  if (e1.x() * e2.y() - e1.y() * e2.x() < 0.0) std::swap(verts[1], verts[2]);

  for (int iter = 0;; ++iter) {
    const int n = static_cast<int>(verts.size());
    if (n > opt.epa_max_faces) {
      std::ostringstream msg;
      msg << "EPA exceeded " << opt.epa_max_faces << " edges after " << iter << " expansions";
      throw NumericalError(msg.str());
    }
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    Vec3 best_n = Vec3::Zero();
    for (int i = 0; i < n; ++i) {
      const Vec3 e = verts[(i + 1) % n].w - verts[i].w;
      Vec3 nn(e.y(), -e.x(), 0.0);
      const double len = nn.norm();
      if (!(len > 0.0)) continue;
      nn /= len;
      const double d = nn.dot(verts[i].w);
      if (d < best_d) {
        best_d = d;
        best = i;
        best_n = nn;
      }
    }
    const SupportPoint w = diff.support(best_n);
    if (best_n.dot(w.w) - best_d <= opt.epa_tolerance) {
      const SupportPoint& a = verts[best];
      const SupportPoint& b = verts[(best + 1) % n];
      const Vec3 e = b.w - a.w;
      const double t = std::clamp((best_n * best_d - a.w).dot(e) / e.squaredNorm(), 0.0, 1.0);
      PenetrationResult r;
      r.depth = std::max(0.0, best_d);
      r.normal = best_n;
      r.witness_a = (1.0 - t) * a.a + t * b.a;
      r.witness_b = (1.0 - t) * a.b + t * b.b;
      return r;
    }
    verts.insert(verts.begin() + best + 1, w);
  }
}

PenetrationResult penetration(const CoreDifference& diff, const GjkResult& g, const QueryOptions& opt) {
  std::vector<SupportPoint> pts(g.simplex.pts.begin(), g.simplex.pts.begin() + g.simplex.size);
  OriginEncloser encloser(diff, g.scale);
  if (!encloser.enclose(pts)) return flat_penetration(diff, encloser.probes(), g);
  return diff.dim() == 2 ? epa2(diff, std::move(pts), opt) : epa3(diff, std::move(pts), opt);
}

void check_options(const QueryOptions& opt) {
  if (opt.dim != 2 && opt.dim != 3) throw DomainError("query dimension must be 2 or 3");
  if (!(opt.tolerance > 0.0)) throw DomainError("distance tolerance must be positive");
}

DistanceResult distance_impl(const ConvexBody& a, const ConvexBody& b, const Vec3& offset, const QueryOptions& opt) {
  check_options(opt);
  const CoreDifference diff(a, b, offset, opt.dim);
  const double ma = a.margin();
  const double mb = b.margin();
  const GjkResult g = run_gjk(diff, opt, -1.0, opt.stop_below + ma + mb);
  DistanceResult r;
  r.iterations = g.iterations;
  if (!g.overlap) {
    Vec3 pa = Vec3::Zero();
    Vec3 pb = Vec3::Zero();
    for (int i = 0; i < g.simplex.size; ++i) {
      pa += g.simplex.lambda[i] * g.simplex.pts[i].a;
      pb += g.simplex.lambda[i] * g.simplex.pts[i].b;
    }
    const double dist = g.v.norm();
    r.normal = -g.v / dist;
    r.signed_distance = dist - ma - mb;
    r.lower_bound = std::min(g.lower, dist) - ma - mb;
    r.witness_a = pa + ma * r.normal;
    r.witness_b = pb - mb * r.normal;
    return r;
  }
  if (!opt.compute_penetration) {
    Vec3 dir = diff.center_offset();
    if (opt.dim == 2) dir.z() = 0.0;
    r.normal = dir.norm() > 0.0 ? Vec3(dir.normalized()) : Vec3(Vec3::UnitX());
    r.signed_distance = -ma - mb;
    r.lower_bound = r.signed_distance;
    Vec3 pa = Vec3::Zero();
    Vec3 pb = Vec3::Zero();
    for (int i = 0; i < g.simplex.size; ++i) {
      pa += g.simplex.lambda[i] * g.simplex.pts[i].a;
      pb += g.simplex.lambda[i] * g.simplex.pts[i].b;
    }
    r.witness_a = pa;
    r.witness_b = pb;
    return r;
  }
  const PenetrationResult p = penetration(diff, g, opt);
  r.normal = p.normal;
  r.signed_distance = -p.depth - ma - mb;
  r.lower_bound = r.signed_distance;
  r.witness_a = p.witness_a + ma * p.normal;
  r.witness_b = p.witness_b - mb * p.normal;
  return r;
}

bool intersects_impl(const ConvexBody& a, const ConvexBody& b, const Vec3& offset, const QueryOptions& opt) {
  check_options(opt);
  const double margins = a.margin() + b.margin();
  const double reach = a.bounding_radius() + b.bounding_radius() + opt.tolerance;
  Vec3 gap = b.center() + offset - a.center();
  if (opt.dim == 2) gap.z() = 0.0;
  if (gap.squaredNorm() > reach * reach) return false;
  const CoreDifference diff(a, b, offset, opt.dim);
  const GjkResult g = run_gjk(diff, opt, margins + opt.tolerance);
  if (g.overlap) return true;
  if (g.separated_early) return false;
  return g.distance - margins <= opt.tolerance;
}

}  // namespace

DistanceResult distance(const ConvexBody& a, const ConvexBody& b, const QueryOptions& options) {
  return distance_impl(a, b, Vec3::Zero(), options);
}

bool intersects(const ConvexBody& a, const ConvexBody& b, const QueryOptions& options) {
  return intersects_impl(a, b, Vec3::Zero(), options);
}

bool intersects(const ConvexBody& a, const ConvexBody& b, const Vec3& b_offset, const QueryOptions& options) {
  return intersects_impl(a, b, b_offset, options);
}

double core_distance(const ConvexBody& a, const ConvexBody& b, const QueryOptions& options) {
  check_options(options);
  const CoreDifference diff(a, b, Vec3::Zero(), options.dim);
  const GjkResult g = run_gjk(diff, options, -1.0);
  return g.overlap ? 0.0 : g.distance;
}

double point_distance(const Vec3& p, const ConvexBody& body, const QueryOptions& options) {
  return std::max(0.0, core_distance(ConvexBody::point(p), body, options) - body.margin());
}

}  // namespace ccopt::geometry
