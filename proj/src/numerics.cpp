#include "censura/numerics.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace censura {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be finite");
}

// Asymptotic series for log Phi(t), t << 0:
//   Phi(t) = phi(t) / |t| * sum_k (-1)^k (2k-1)!! / t^(2k)
// Ten terms are below double precision once |t| > 30.
double log_cdf_lower_tail(double t) {
  const double inv_t2 = 1.0 / (t * t);
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= 10; ++k) {
    term *= -(2.0 * k - 1.0) * inv_t2;
    sum += term;
  }
  return -0.5 * t * t - std::log(-t) - kHalfLog2Pi + std::log(sum);
}

}  // namespace

GaussianParams::GaussianParams(double mean, double variance) : mean_(mean), variance_(variance) {
  require_finite(mean, "Gaussian mean");
  require_finite(variance, "Gaussian variance");
  if (variance_ < kVarianceFloor) variance_ = kVarianceFloor;
}

double GaussianParams::stddev() const noexcept { return std::sqrt(variance_); }

double GaussianParams::standardize(double y) const noexcept { return (y - mean_) / stddev(); }

double std_normal_log_pdf(double t) noexcept { return -kHalfLog2Pi - 0.5 * t * t; }

double std_normal_cdf(double t) noexcept { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

double std_normal_log_cdf(double t) noexcept {
  if (t < -30.0) return log_cdf_lower_tail(t);
  if (t < -1.0) return std::log(0.5 * std::erfc(-t / std::numbers::sqrt2));
  return std::log1p(-0.5 * std::erfc(t / std::numbers::sqrt2));
}

double std_normal_hazard_below(double t) noexcept {
  return std::exp(std_normal_log_pdf(t) - std_normal_log_cdf(t));
}

double gauss_log_pdf(double y, const GaussianParams& p) {
  require_finite(y, "y");
  const double r = y - p.mean();
  return -kHalfLog2Pi - 0.5 * std::log(p.variance()) - r * r / (2.0 * p.variance());
}

double gauss_cdf(double y, const GaussianParams& p) {
  require_finite(y, "y");
  return std_normal_cdf(p.standardize(y));
}

double gauss_log_cdf(double y, const GaussianParams& p) {
  require_finite(y, "y");
  return std_normal_log_cdf(p.standardize(y));
}

double gauss_log_survival(double y, const GaussianParams& p) {
  require_finite(y, "y");
  return std_normal_log_cdf(-p.standardize(y));
}

double softplus(double x) noexcept {
  if (x > 30.0) return x + std::exp(-x);
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("softplus_inverse requires y > 0");
  if (y > 30.0) return y + std::log(-std::expm1(-y));
  return std::log(std::expm1(y));
}

double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("log_gamma requires finite x > 0");
  // Lanczos, g = 7, n = 9.
  static constexpr std::array<double, 9> c = {
      0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
      771.32342877765313,   -176.61502916214059,   12.507343278686905,
      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x < 0.5) {
    // Reflection keeps the series in its accurate range.
    return std::log(std::numbers::pi / std::abs(std::sin(std::numbers::pi * x))) - log_gamma(1.0 - x);
  }
  const double z = x - 1.0;
  double a = c[0];
  const double t = z + 7.5;
  for (int i = 1; i < 9; ++i) a += c[i] / (z + i);
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(a);
}

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("digamma requires finite x > 0");
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  const double series =
      f * (-1.0 / 12 + f * (1.0 / 120 + f * (-1.0 / 252 + f * (1.0 / 240 + f * (-1.0 / 132)))));
  return result + std::log(x) - 0.5 / x + series;
}

}  // namespace censura
