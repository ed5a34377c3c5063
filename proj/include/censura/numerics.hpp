#pragma once

namespace censura {

/// Lower bound applied to every predicted variance.
inline constexpr double kVarianceFloor = 1e-6;

/// Mean and variance of a univariate Gaussian. The variance is clamped to
/// kVarianceFloor on construction; non-finite inputs are rejected.
class GaussianParams {
 public:
  GaussianParams(double mean, double variance);

  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return variance_; }
  double stddev() const noexcept;
  /// (y - mean) / stddev
  double standardize(double y) const noexcept;

  friend bool operator==(const GaussianParams&, const GaussianParams&) = default;

 private:
  double mean_;
  double variance_;
};

double gauss_log_pdf(double y, const GaussianParams& p);
double gauss_cdf(double y, const GaussianParams& p);
double gauss_log_cdf(double y, const GaussianParams& p);
/// log(1 - Phi(y)).
double gauss_log_survival(double y, const GaussianParams& p);

// Standard-normal forms used by the losses and metrics.
double std_normal_log_pdf(double t) noexcept;
double std_normal_cdf(double t) noexcept;
/// log Phi(t); accurate over the whole real line, finite for |t| < 1e150.
double std_normal_log_cdf(double t) noexcept;
/// phi(t) / Phi(t), the reversed Mills ratio; d/dt log Phi(t).
double std_normal_hazard_below(double t) noexcept;

double softplus(double x) noexcept;
double logistic(double x) noexcept;
/// Inverse of softplus for y > 0.
double softplus_inverse(double y);

/// log Gamma(x) for x > 0 via a Lanczos approximation.
double log_gamma(double x);
/// Digamma function psi(x) for x > 0.
double digamma(double x);

}  // namespace censura
