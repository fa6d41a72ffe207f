#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "ccopt/qp.hpp"

// Brute-force reference for strictly convex QPs: accelerated projected
// gradient ascent on the Lagrangian dual. Every iterate's dual value is a
// lower bound on the optimum.
namespace qporacle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DualResult {
  double value = -INFINITY;
  VectorXd z;
  int iterations = 0;
};

inline DualResult dual_ascent(const ccopt::qp::QuadraticProgram& qp, int max_iter = 400000) {
  const int n = qp.size();
  // Stack every inequality as G z <= h.
  std::vector<VectorXd> rows;
  std::vector<double> rhs;
  for (Eigen::Index i = 0; i < qp.b_ineq.size(); ++i) {
    rows.push_back(qp.a_ineq.row(i).transpose());
    rhs.push_back(qp.b_ineq[i]);
  }
  for (int j = 0; j < n; ++j) {
    if (qp.lower.size() && std::isfinite(qp.lower[j])) {
      rows.push_back(-VectorXd::Unit(n, j));
      rhs.push_back(-qp.lower[j]);
    }
    if (qp.upper.size() && std::isfinite(qp.upper[j])) {
      rows.push_back(VectorXd::Unit(n, j));
      rhs.push_back(qp.upper[j]);
    }
  }
  const int mi = static_cast<int>(rows.size());
  const int me = static_cast<int>(qp.b_eq.size());
  MatrixXd m(mi + me, n);
  VectorXd h(mi + me);
  for (int i = 0; i < mi; ++i) {
    m.row(i) = rows[static_cast<std::size_t>(i)].transpose();
    h[i] = rhs[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < me; ++i) {
    m.row(mi + i) = qp.a_eq.row(i);
    h[mi + i] = qp.b_eq[i];
  }

  const Eigen::LLT<MatrixXd> llt(qp.hessian);
  const MatrixXd hinv_mt = llt.solve(m.transpose());
  if (mi + me == 0) {
    DualResult r;
    r.z = -llt.solve(qp.linear);
    r.value = qp.objective(r.z);
    return r;
  }
  const MatrixXd gram = m * hinv_mt;
  const double lip = Eigen::SelfAdjointEigenSolver<MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double step = 1.0 / std::max(lip, 1e-12);

  auto primal = [&](const VectorXd& y) { return VectorXd(-llt.solve(qp.linear + m.transpose() * y)); };
  auto value = [&](const VectorXd& y, const VectorXd& z) {
    return qp.objective(z) + y.dot(m * z - h);
  };
  auto project = [&](VectorXd y) {
    for (int i = 0; i < mi; ++i) y[i] = std::max(0.0, y[i]);
    return y;
  };

  VectorXd y = VectorXd::Zero(mi + me);
  VectorXd w = y;
  double tk = 1.0;
  DualResult best;
  double last_check = -INFINITY;
  for (int k = 0; k < max_iter; ++k) {
    const VectorXd zw = primal(w);
    const VectorXd y_new = project(w + step * (m * zw - h));
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    // Gradient-based restart keeps the momentum from overshooting.
    if ((w - y_new).dot(y_new - y) > 0.0) {
      w = y_new;
      tk = 1.0;
    } else {
      w = y_new + ((tk - 1.0) / t_new) * (y_new - y);
      tk = t_new;
    }
    y = y_new;
    if (k % 500 == 0 || k + 1 == max_iter) {
      const VectorXd z = primal(y);
      const double v = value(y, z);
      if (v > best.value) {
        best.value = v;
        best.z = z;
      }
      best.iterations = k;
      if (k > 0 && std::abs(v - last_check) <= 1e-13 * std::max(1.0, std::abs(v))) break;
      last_check = v;
    }
  }
  return best;
}

struct RandomQp {
  ccopt::qp::QuadraticProgram qp;
  VectorXd feasible;
};

// Random strictly convex QP with a known strictly feasible point.
inline RandomQp random_feasible_qp(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.05, 1.0);
  std::uniform_int_distribution<int> count(0, 2 * n);
  RandomQp out{ccopt::qp::QuadraticProgram(n), VectorXd(n)};
  auto& qp = out.qp;
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = u(rng);
  qp.hessian = a * a.transpose() / n + 0.2 * MatrixXd::Identity(n, n);
  qp.hessian = 0.5 * (qp.hessian + qp.hessian.transpose()).eval();
  for (int i = 0; i < n; ++i) qp.linear[i] = 3.0 * u(rng);
  for (int i = 0; i < n; ++i) out.feasible[i] = u(rng);

  const int mi = count(rng);
  for (int k = 0; k < mi; ++k) {
    VectorXd row(n);
    for (int j = 0; j < n; ++j) row[j] = u(rng);
    qp.add_inequality(row, row.dot(out.feasible) + 0.3 * pos(rng));
  }
  std::uniform_int_distribution<int> eqs(0, std::max(0, n / 3));
  const int me = eqs(rng);
  for (int k = 0; k < me; ++k) {
    VectorXd row(n);
    for (int j = 0; j < n; ++j) row[j] = u(rng);
    qp.add_equality(row, row.dot(out.feasible));
  }
  if (rng() % 2 == 0) {
    qp.lower = VectorXd(n);
    qp.upper = VectorXd(n);
    for (int j = 0; j < n; ++j) {
      qp.lower[j] = rng() % 4 == 0 ? -INFINITY : out.feasible[j] - pos(rng);
      qp.upper[j] = rng() % 4 == 0 ? INFINITY : out.feasible[j] + pos(rng);
    }
  }
  return out;
}

}  // namespace qporacle
