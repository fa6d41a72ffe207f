#include "ccopt/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ccopt/error.hpp"

namespace ccopt::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError("quadratic program: " + what);
}

void validate(const QuadraticProgram& qp) {
  const int n = qp.size();
  require(qp.hessian.rows() == n && qp.hessian.cols() == n, "hessian must be n x n");
  const Eigen::Index mi = qp.b_ineq.size();
  const Eigen::Index me = qp.b_eq.size();
  require(qp.a_ineq.rows() == mi && (mi == 0 || qp.a_ineq.cols() == n), "inequality rows do not match b or n");
  require(qp.a_eq.rows() == me && (me == 0 || qp.a_eq.cols() == n), "equality rows do not match d or n");
  require(qp.lower.size() == 0 || qp.lower.size() == n, "lower bounds must be empty or of size n");
  require(qp.upper.size() == 0 || qp.upper.size() == n, "upper bounds must be empty or of size n");
  require(qp.hessian.allFinite() && qp.linear.allFinite(), "objective has non-finite entries");
  require((mi == 0 || (qp.a_ineq.allFinite() && qp.b_ineq.allFinite())) &&
              (me == 0 || (qp.a_eq.allFinite() && qp.b_eq.allFinite())),
          "constraints have non-finite entries");
  for (Eigen::Index i = 0; i < qp.lower.size(); ++i) require(!std::isnan(qp.lower[i]), "NaN lower bound");
  for (Eigen::Index i = 0; i < qp.upper.size(); ++i) require(!std::isnan(qp.upper[i]), "NaN upper bound");
  const double scale = std::max(1.0, qp.hessian.cwiseAbs().maxCoeff());
  require((qp.hessian - qp.hessian.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * scale, "hessian is not symmetric");
}

// Constraint p in the combined numbering, as n_p^T z >= b0_p.
struct Constraints {
  const QuadraticProgram& qp;
  int n;
  int mi;
  std::vector<double> norms;

  explicit Constraints(const QuadraticProgram& q) : qp(q), n(q.size()), mi(static_cast<int>(q.b_ineq.size())) {
    norms.resize(static_cast<std::size_t>(count()), 1.0);
    for (int i = 0; i < mi; ++i) norms[static_cast<std::size_t>(i)] = qp.a_ineq.row(i).norm();
  }

  int count() const { return mi + 2 * n; }

  bool present(int p) const {
    if (p < mi) return norms[static_cast<std::size_t>(p)] > 0.0 || qp.b_ineq[p] < 0.0;
    if (p < mi + n) return qp.lower.size() > 0 && std::isfinite(qp.lower[p - mi]);
    return qp.upper.size() > 0 && std::isfinite(qp.upper[p - mi - n]);
  }

  VectorXd normal(int p) const {
    if (p < mi) return -qp.a_ineq.row(p).transpose();
    VectorXd e = VectorXd::Zero(n);
    if (p < mi + n) {
      e[p - mi] = 1.0;
    } else {
      e[p - mi - n] = -1.0;
    }
    return e;
  }

  double offset(int p) const {
    if (p < mi) return -qp.b_ineq[p];
    if (p < mi + n) return qp.lower[p - mi];
    return -qp.upper[p - mi - n];
  }

  // n_p^T z - b0_p; nonnegative when satisfied.
  double slack(int p, const VectorXd& z) const {
    if (p < mi) return qp.b_ineq[p] - qp.a_ineq.row(p).dot(z);
    if (p < mi + n) return z[p - mi] - qp.lower[p - mi];
    return qp.upper[p - mi - n] - z[p - mi - n];
  }

  double norm(int p) const { return norms[static_cast<std::size_t>(p)]; }
};

// Goldfarb-Idnani working state: J = L^-T Q and J^T N_active = [R; 0].
class DualActiveSet {
 public:
  explicit DualActiveSet(const Eigen::MatrixXd& lower_cholesky) : n_(static_cast<int>(lower_cholesky.rows())) {
    const Eigen::MatrixXd linv =
        lower_cholesky.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n_, n_));
    j_ = linv.transpose();
    r_ = Eigen::MatrixXd::Zero(n_, n_);
  }

  int active_count() const { return q_; }

  // Primal direction z and dual direction r for adding normal np.
  void directions(const VectorXd& np, VectorXd& d, VectorXd& z, VectorXd& r) const {
    d = j_.transpose() * np;
    z = j_.rightCols(n_ - q_) * d.tail(n_ - q_);
    r = r_.topLeftCorner(q_, q_).triangularView<Eigen::Upper>().solve(d.head(q_));
  }

  // Appends a constraint whose d = J^T n has already been computed.
  void add(VectorXd d) {
    for (int j = n_ - 1; j > q_; --j) {
      const double a = d[j - 1];
      const double b = d[j];
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h;
      const double s = b / h;
      d[j - 1] = h;
      d[j] = 0.0;
      rotate_columns(j - 1, c, s);
    }
    r_.col(q_).head(q_ + 1) = d.head(q_ + 1);
    ++q_;
  }

  // Removes the constraint at active position l.
  void remove(int l) {
    for (int k = l; k < q_ - 1; ++k) r_.col(k) = r_.col(k + 1);
    r_.col(q_ - 1).setZero();
    for (int j = l; j < q_ - 1; ++j) {
      const double a = r_(j, j);
      const double b = r_(j + 1, j);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h;
      const double s = b / h;
      for (int k = j; k < q_ - 1; ++k) {
        const double t1 = r_(j, k);
        const double t2 = r_(j + 1, k);
        r_(j, k) = c * t1 + s * t2;
        r_(j + 1, k) = -s * t1 + c * t2;
      }
      rotate_columns(j, c, s);
    }
    --q_;
  }

 private:
  void rotate_columns(int j, double c, double s) {
    const VectorXd a = j_.col(j);
    j_.col(j) = c * a + s * j_.col(j + 1);
    j_.col(j + 1) = -s * a + c * j_.col(j + 1);
  }

  int n_;
  int q_ = 0;
  Eigen::MatrixXd j_;
  Eigen::MatrixXd r_;
};

struct Factor {
  Eigen::MatrixXd lower;
  double regularization = 0.0;
};

Factor factor_hessian(const MatrixXd& h) {
  const int n = static_cast<int>(h.rows());
  Factor f;
  if (n == 0) return f;
  const double scale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
  Eigen::LDLT<MatrixXd> ldlt(h);
  if (ldlt.info() != Eigen::Success) throw NumericalError("quadratic program: hessian factorization failed");
  if (ldlt.vectorD().minCoeff() < -1e-8 * scale) throw DomainError("quadratic program: hessian is indefinite");

  double reg = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    MatrixXd hr = h;
    hr.diagonal().array() += reg;
    Eigen::LLT<MatrixXd> llt(hr);
    if (llt.info() == Eigen::Success) {
      const MatrixXd l = llt.matrixL();
      const double min_pivot = l.diagonal().cwiseAbs2().minCoeff();
      if (min_pivot > 1e-14 * scale) {
        f.lower = l;
        f.regularization = reg;
        return f;
      }
    }
    reg = reg == 0.0 ? 1e-10 : reg * 10.0;
  }
  throw NumericalError("quadratic program: hessian stays singular after regularization");
}

}  // namespace

QuadraticProgram::QuadraticProgram(int n)
    : hessian(MatrixXd::Zero(n, n)),
      linear(VectorXd::Zero(n)),
      a_ineq(0, n),
      b_ineq(0),
      a_eq(0, n),
      b_eq(0) {}

int QuadraticProgram::add_inequality(const VectorXd& a_row, double b) {
  if (a_row.size() != size()) throw DomainError("quadratic program: inequality row has the wrong length");
  const Eigen::Index m = a_ineq.rows();
  a_ineq.conservativeResize(m + 1, size());
  b_ineq.conservativeResize(m + 1);
  a_ineq.row(m) = a_row.transpose();
  b_ineq[m] = b;
  return static_cast<int>(m);
}

int QuadraticProgram::add_equality(const VectorXd& c_row, double d) {
  if (c_row.size() != size()) throw DomainError("quadratic program: equality row has the wrong length");
  const Eigen::Index m = a_eq.rows();
  a_eq.conservativeResize(m + 1, size());
  b_eq.conservativeResize(m + 1);
  a_eq.row(m) = c_row.transpose();
  b_eq[m] = d;
  return static_cast<int>(m);
}

std::string to_string(Status s) {
  switch (s) {
    case Status::Optimal:
      return "optimal";
    case Status::Infeasible:
      return "infeasible";
    case Status::IterationLimit:
      return "iteration-limit";
  }
  return "unknown";
}

double KKTResiduals::max() const { return std::max({stationarity, primal, dual, complementarity}); }

QPSolution solve_qp(const QuadraticProgram& qp, const QPOptions& options, const ActiveSet* warm_start) {
  validate(qp);
  const int n = qp.size();
  const Constraints cons(qp);
  const int me = static_cast<int>(qp.b_eq.size());
  const int total = cons.count();
  const int max_iter = options.max_iterations > 0 ? options.max_iterations : 50 + 10 * (n + me + total);
  const double tol = options.feasibility_tolerance;

  QPSolution sol;
  sol.ineq_multipliers = VectorXd::Zero(cons.mi);
  sol.eq_multipliers = VectorXd::Zero(me);
  sol.lower_multipliers = VectorXd::Zero(n);
  sol.upper_multipliers = VectorXd::Zero(n);

  const Factor fac = factor_hessian(qp.hessian);
  sol.regularization = fac.regularization;
  sol.regularized = fac.regularization > 0.0;
  if (n == 0) {
    sol.z = VectorXd::Zero(0);
    sol.status = Status::Optimal;
    return sol;
  }

  // Unconstrained minimizer.
  VectorXd x = -fac.lower.transpose().triangularView<Eigen::Upper>().solve(
      fac.lower.triangularView<Eigen::Lower>().solve(qp.linear));
  DualActiveSet ws(fac.lower);
  std::vector<int> active;  // -1 - k for equality k
  std::vector<double> u;
  VectorXd d;
  VectorXd z;
  VectorXd r;

  auto violation_scale = [&](double b0, double nrm) { return tol * std::max(1.0, std::abs(b0) / nrm); };

  auto finish = [&](Status st, std::string msg) {
    sol.status = st;
    sol.message = std::move(msg);
    sol.z = x;
    sol.objective = qp.objective(x);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const int p = active[k];
      if (p < 0) {
        sol.eq_multipliers[-1 - p] = -u[k];
      } else {
        sol.active.constraints.push_back(p);
        if (p < cons.mi) {
          sol.ineq_multipliers[p] = u[k];
        } else if (p < cons.mi + n) {
          sol.lower_multipliers[p - cons.mi] = u[k];
        } else {
          sol.upper_multipliers[p - cons.mi - n] = u[k];
        }
      }
    }
    sol.residuals = kkt_residuals(qp, sol);
    return sol;
  };

  // Equalities enter first and stay.
  for (int k = 0; k < me; ++k) {
    const VectorXd np = qp.a_eq.row(k).transpose();
    const double nn = np.norm();
    const double resid = np.dot(x) - qp.b_eq[k];
    ws.directions(np, d, z, r);
    const double tail = d.tail(n - ws.active_count()).norm();
    if (nn == 0.0 || tail <= 1e-12 * d.norm()) {
      if (std::abs(resid) <= violation_scale(qp.b_eq[k], std::max(nn, 1e-300)) * std::max(nn, 1.0)) continue;
      return finish(Status::Infeasible, "equality constraints are inconsistent");
    }
    const double t = -resid / z.dot(np);
    x += t * z;
    for (int i = 0; i < ws.active_count(); ++i) u[static_cast<std::size_t>(i)] -= t * r[i];
    ws.add(d);
    active.push_back(-1 - k);
    u.push_back(t);
  }

  std::vector<char> is_active(static_cast<std::size_t>(total), 0);
  std::vector<char> preferred(static_cast<std::size_t>(total), 0);
  if (warm_start) {
    for (int p : warm_start->constraints) {
      if (p < 0 || p >= total) throw DomainError("quadratic program: warm-start index out of range");
      preferred[static_cast<std::size_t>(p)] = 1;
    }
  }

  int iter = 0;
  for (;;) {
    // Most violated constraint, favouring warm-start members.
    int p = -1;
    bool p_preferred = false;
    double worst = 0.0;
    for (int c = 0; c < total; ++c) {
      if (is_active[static_cast<std::size_t>(c)] || !cons.present(c)) continue;
      const double nrm = std::max(cons.norm(c), 1e-300);
      const double s = cons.slack(c, x);
      if (s >= -violation_scale(cons.offset(c), nrm) * nrm) continue;
      if (cons.norm(c) == 0.0) return finish(Status::Infeasible, "a zero constraint row has a negative bound");
      const double v = s / nrm;
      const bool pref = preferred[static_cast<std::size_t>(c)] != 0;
      if (p < 0 || (pref && !p_preferred) || (pref == p_preferred && v < worst)) {
        p = c;
        worst = v;
        p_preferred = pref;
      }
    }
    if (p < 0) break;

    const VectorXd np = cons.normal(p);
    double up = 0.0;
    for (;;) {
      if (++iter > max_iter) {
        sol.iterations = iter - 1;
        return finish(Status::IterationLimit, "active-set iteration limit reached");
      }
      ws.directions(np, d, z, r);
      const int q = ws.active_count();
      double t1 = kInf;
      int l = -1;
      for (int j = 0; j < q; ++j) {
        if (active[static_cast<std::size_t>(j)] < 0 || r[j] <= 0.0) continue;
        const double ratio = u[static_cast<std::size_t>(j)] / r[j];
        if (ratio < t1) {
          t1 = ratio;
          l = j;
        }
      }
      const double tail = d.tail(n - q).norm();
      double t2 = kInf;
      if (tail > 1e-12 * d.norm()) t2 = -cons.slack(p, x) / z.dot(np);
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        sol.iterations = iter;
        std::ostringstream msg;
        msg << "constraint " << p << " cannot be satisfied together with the active set";
        return finish(Status::Infeasible, msg.str());
      }
      for (int j = 0; j < q; ++j) u[static_cast<std::size_t>(j)] -= t * r[j];
      up += t;
      if (std::isfinite(t2)) x += t * z;
      if (t2 <= t1) {
        ws.add(d);
        active.push_back(p);
        u.push_back(up);
        is_active[static_cast<std::size_t>(p)] = 1;
        break;
      }
      const int dropped = active[static_cast<std::size_t>(l)];
      ws.remove(l);
      active.erase(active.begin() + l);
      u.erase(u.begin() + l);
      is_active[static_cast<std::size_t>(dropped)] = 0;
      if (cons.slack(p, x) >= -violation_scale(cons.offset(p), cons.norm(p)) * cons.norm(p)) break;
    }
  }
  sol.iterations = iter;
  return finish(Status::Optimal, {});
}

KKTResiduals kkt_residuals(const QuadraticProgram& qp, const QPSolution& sol) {
  KKTResiduals res;
  const int n = qp.size();
  if (n == 0) return res;
  const VectorXd& z = sol.z;
  VectorXd grad = qp.hessian * z + qp.linear;
  const double scale = std::max({1.0, qp.linear.cwiseAbs().maxCoeff(), (qp.hessian * z).cwiseAbs().maxCoeff()});
  if (qp.b_ineq.size() > 0) grad += qp.a_ineq.transpose() * sol.ineq_multipliers;
  if (qp.b_eq.size() > 0) grad += qp.a_eq.transpose() * sol.eq_multipliers;
  grad += sol.upper_multipliers - sol.lower_multipliers;
  res.stationarity = grad.cwiseAbs().maxCoeff() / scale;

  auto complement = [&](double mult, double slack) {
    res.primal = std::max(res.primal, -slack);
    res.dual = std::max(res.dual, -mult);
    res.complementarity = std::max(res.complementarity, std::abs(mult * slack));
  };
  for (Eigen::Index i = 0; i < qp.b_ineq.size(); ++i) {
    complement(sol.ineq_multipliers[i], qp.b_ineq[i] - qp.a_ineq.row(i).dot(z));
  }
  for (Eigen::Index i = 0; i < qp.b_eq.size(); ++i) {
    res.primal = std::max(res.primal, std::abs(qp.a_eq.row(i).dot(z) - qp.b_eq[i]));
  }
  for (int i = 0; i < n; ++i) {
    if (qp.lower.size() > 0 && std::isfinite(qp.lower[i])) complement(sol.lower_multipliers[i], z[i] - qp.lower[i]);
    if (qp.upper.size() > 0 && std::isfinite(qp.upper[i])) complement(sol.upper_multipliers[i], qp.upper[i] - z[i]);
  }
  return res;
}

}  // namespace ccopt::qp
