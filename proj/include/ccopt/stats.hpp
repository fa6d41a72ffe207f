#pragma once

// Chi-squared distribution for the workspace dimensions this library supports.

namespace ccopt::stats {

/// Degrees of freedom of the chi-squared distribution; equals the workspace
/// dimension, so only 2 and 3 are accepted.
class Dof {
 public:
  explicit Dof(int n);
  int value() const { return n_; }
  friend bool operator==(Dof a, Dof b) { return a.n_ == b.n_; }

 private:
  int n_;
};

/// Largest probability accepted by the inverse CDF; larger inputs are clamped.
inline constexpr double kMaxInverseProbability = 1.0 - 1e-15;

double chi2_pdf(double x, Dof n);
double chi2_cdf(double x, Dof n);
/// Survival function 1 - cdf, computed without cancellation in the upper tail.
double chi2_sf(double x, Dof n);

/// Returns x with chi2_cdf(x, n) == p. p is clamped to [0, kMaxInverseProbability].
double chi2_inv_cdf(double p, Dof n);
/// Returns x with chi2_sf(x, n) == q; accurate for tiny q where 1 - q rounds.
double chi2_inv_sf(double q, Dof n);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double regularized_gamma_q(double a, double x);

}  // namespace ccopt::stats
