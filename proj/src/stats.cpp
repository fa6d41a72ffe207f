#include "ccopt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ccopt/error.hpp"

namespace ccopt::stats {

namespace {

constexpr int kMaxSeriesTerms = 1000;
constexpr double kGammaEps = 1e-16;
constexpr double kTiny = 1e-300;

// Series expansion of P(a, x), valid and fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < kMaxSeriesTerms; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kGammaEps) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw NumericalError("incomplete gamma series did not converge for a=" + std::to_string(a) +
                       " x=" + std::to_string(x));
}

// Modified Lentz continued fraction for Q(a, x), valid for x >= a + 1.
double gamma_q_continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxSeriesTerms; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kGammaEps) {
      return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    }
  }
  throw NumericalError("incomplete gamma continued fraction did not converge for a=" +
                       std::to_string(a) + " x=" + std::to_string(x));
}

void require_nonnegative(double x, const char* op) {
  if (!(x >= 0.0)) {
    throw DomainError(std::string(op) + ": argument must be nonnegative, got " + std::to_string(x));
  }
}

// Safeguarded Newton on g(x) = target_fn(x) - target, with g decreasing when
// `decreasing` is set (survival function) and increasing otherwise (CDF).
template <typename Fn>
double invert_monotone(Fn fn, double target, Dof n, bool decreasing) {
  double lo = 0.0;
  double hi = std::max(1.0, 2.0 * n.value());
  auto below = [&](double x) { return decreasing ? fn(x) > target : fn(x) < target; };
  while (below(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e4) throw NumericalError("chi-squared inversion failed to bracket target");
  }
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double g = fn(x) - target;
    if (g == 0.0) return x;
    const bool too_small = decreasing ? g > 0.0 : g < 0.0;
    if (too_small) {
      lo = x;
    } else {
      hi = x;
    }
    const double slope = decreasing ? -chi2_pdf(x, n) : chi2_pdf(x, n);
    double next = slope != 0.0 ? x - g / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, x) || hi - lo <= 1e-15 * std::max(1.0, x)) {
      return next;
    }
    x = next;
  }
  return x;
}

}  // namespace

Dof::Dof(int n) : n_(n) {
  if (n != 2 && n != 3) {
    throw DomainError("chi-squared degrees of freedom must be 2 or 3, got " + std::to_string(n));
  }
}

double regularized_gamma_p(double a, double x) {
  require_nonnegative(x, "regularized_gamma_p");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_continued_fraction(a, x);
}

double regularized_gamma_q(double a, double x) {
  require_nonnegative(x, "regularized_gamma_q");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_continued_fraction(a, x);
}

double chi2_pdf(double x, Dof n) {
  require_nonnegative(x, "chi2_pdf");
  if (n.value() == 2) return 0.5 * std::exp(-0.5 * x);
  // x^{1/2} e^{-x/2} / (2^{3/2} Gamma(3/2)) = sqrt(x / (2 pi)) e^{-x/2}
  return std::sqrt(x / (2.0 * std::numbers::pi)) * std::exp(-0.5 * x);
}

double chi2_cdf(double x, Dof n) {
  require_nonnegative(x, "chi2_cdf");
  if (std::isinf(x)) return 1.0;
  if (n.value() == 2) return -std::expm1(-0.5 * x);
  return regularized_gamma_p(0.5 * n.value(), 0.5 * x);
}

double chi2_sf(double x, Dof n) {
  require_nonnegative(x, "chi2_sf");
  if (std::isinf(x)) return 0.0;
  if (n.value() == 2) return std::exp(-0.5 * x);
  return regularized_gamma_q(0.5 * n.value(), 0.5 * x);
}

double chi2_inv_cdf(double p, Dof n) {
  if (!(p >= 0.0) || p >= 1.0) {
    throw DomainError("chi2_inv_cdf: probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (p == 0.0) return 0.0;
  p = std::min(p, kMaxInverseProbability);
  if (n.value() == 2) return -2.0 * std::log1p(-p);
  if (p > 0.5) return chi2_inv_sf(1.0 - p, n);
  return invert_monotone([n](double x) { return chi2_cdf(x, n); }, p, n, false);
}

double chi2_inv_sf(double q, Dof n) {
  if (!(q > 0.0) || q > 1.0) {
    throw DomainError("chi2_inv_sf: tail probability must lie in (0, 1], got " + std::to_string(q));
  }
  if (q == 1.0) return 0.0;
  q = std::max(q, 1.0 - kMaxInverseProbability);
  if (n.value() == 2) return -2.0 * std::log(q);
  if (q > 0.5) return chi2_inv_cdf(1.0 - q, n);
  return invert_monotone([n](double x) { return chi2_sf(x, n); }, q, n, true);
}

}  // namespace ccopt::stats
