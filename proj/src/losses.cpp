#include "censura/losses.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace censura {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
}

}  // namespace

void BatchTargets::validate() const {
  if (labels.size() != masks.size()) throw std::invalid_argument("BatchTargets: labels and masks differ in length");
  for (auto m : masks) censoring_from_int(to_int(m));
}

bool EvidentialOutput::valid() const noexcept {
  return std::isfinite(gamma) && std::isfinite(nu) && std::isfinite(alpha) && std::isfinite(beta) && nu > 0.0 &&
         alpha > 1.0 && beta > 0.0;
}

double censored_error(double mu, double label, Censoring mask) {
  switch (mask) {
    case Censoring::observed: return label - mu;
    case Censoring::left: return std::min(label - mu, 0.0);
    case Censoring::right: return std::max(label - mu, 0.0);
  }
  throw std::invalid_argument("censored_error: mask must be -1, 0 or 1");
}

MseLoss censored_mse(std::span<const double> mu, const BatchTargets& targets) {
  targets.validate();
  require_nonempty(mu.size(), "censored_mse");
  if (mu.size() != targets.size()) throw std::invalid_argument("censored_mse: prediction/target length mismatch");
  const double inv_b = 1.0 / static_cast<double>(mu.size());
  MseLoss out;
  out.d_mean.resize(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double e = censored_error(mu[i], targets.labels[i], targets.masks[i]);
    out.value += e * e;
    // A clamped one-sided error is the constant 0, so its derivative is 0 too.
    out.d_mean[i] = -2.0 * e * inv_b;
  }
  out.value *= inv_b;
  return out;
}

double censored_nll_term(const GaussianParams& p, double label, Censoring mask) {
  switch (mask) {
    case Censoring::observed: return -gauss_log_pdf(label, p);
    case Censoring::left: return -gauss_log_cdf(label, p);
    case Censoring::right: return -gauss_log_survival(label, p);
  }
  throw std::invalid_argument("censored_nll_term: mask must be -1, 0 or 1");
}

GaussianLoss censored_nll(std::span<const GaussianParams> params, const BatchTargets& targets, bool include_constant) {
  targets.validate();
  require_nonempty(params.size(), "censored_nll");
  if (params.size() != targets.size()) throw std::invalid_argument("censored_nll: prediction/target length mismatch");
  const double inv_b = 1.0 / static_cast<double>(params.size());

  GaussianLoss out;
  out.d_mean.resize(params.size());
  out.d_variance.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const double v = p.variance();
    const double s = std::sqrt(v);
    const double z = targets.labels[i];
    double term = 0.0;
    double dm = 0.0;
    double dv = 0.0;
    switch (targets.masks[i]) {
      case Censoring::observed: {
        const double r = z - p.mean();
        term = 0.5 * std::log(v) + r * r / (2.0 * v) + (include_constant ? kHalfLog2Pi : 0.0);
        dm = -r / v;
        dv = 0.5 / v - r * r / (2.0 * v * v);
        break;
      }
      case Censoring::left: {
        // -log Phi(t), t = (z - mu) / s
        const double t = (z - p.mean()) / s;
        term = -std_normal_log_cdf(t);
        const double h = std_normal_hazard_below(t);
        dm = h / s;
        dv = h * t / (2.0 * v);
        break;
      }
      case Censoring::right: {
        // -log Phi(-t)
        const double t = (z - p.mean()) / s;
        term = -std_normal_log_cdf(-t);
        const double h = std_normal_hazard_below(-t);
        dm = -h / s;
        dv = -h * t / (2.0 * v);
        break;
      }
    }
    out.value += term;
    out.d_mean[i] = dm * inv_b;
    out.d_variance[i] = dv * inv_b;
  }
  out.value *= inv_b;
  return out;
}

EvidentialLoss evidential_loss(std::span<const EvidentialOutput> out, std::span<const double> y, double lambda) {
  require_nonempty(out.size(), "evidential_loss");
  if (out.size() != y.size()) throw std::invalid_argument("evidential_loss: prediction/target length mismatch");
  if (!(lambda >= 0.0)) throw std::invalid_argument("evidential_loss: lambda must be non-negative");
  const double inv_b = 1.0 / static_cast<double>(out.size());
  const double half_log_pi = 0.5 * std::log(std::numbers::pi);

  EvidentialLoss res;
  res.d_gamma.resize(out.size());
  res.d_nu.resize(out.size());
  res.d_alpha.resize(out.size());
  res.d_beta.resize(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& o = out[i];
    if (!o.valid()) throw std::invalid_argument("evidential_loss: requires nu > 0, alpha > 1, beta > 0");
    const double r = y[i] - o.gamma;
    const double omega = 2.0 * o.beta * (1.0 + o.nu);
    const double q = r * r * o.nu + omega;
    const double abs_r = std::abs(r);
    const double sgn = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);

    const double nll = half_log_pi - 0.5 * std::log(o.nu) + log_gamma(o.alpha) - log_gamma(o.alpha + 0.5) -
                       o.alpha * std::log(omega) + (o.alpha + 0.5) * std::log(q);
    const double reg = lambda * abs_r * (2.0 * o.nu + o.alpha);
    res.value += nll + reg;

    res.d_gamma[i] = inv_b * ((o.alpha + 0.5) * (-2.0 * r * o.nu) / q - lambda * sgn * (2.0 * o.nu + o.alpha));
    res.d_nu[i] = inv_b * (-0.5 / o.nu - o.alpha * 2.0 * o.beta / omega +
                           (o.alpha + 0.5) * (r * r + 2.0 * o.beta) / q + 2.0 * lambda * abs_r);
    res.d_alpha[i] =
        inv_b * (digamma(o.alpha) - digamma(o.alpha + 0.5) - std::log(omega) + std::log(q) + lambda * abs_r);
    res.d_beta[i] = inv_b * (-o.alpha / o.beta + (o.alpha + 0.5) * 2.0 * (1.0 + o.nu) / q);
  }
  res.value *= inv_b;
  return res;
}

UncertaintyPair evidential_uncertainties(const EvidentialOutput& out) {
  if (!(out.alpha > 1.0)) throw std::invalid_argument("evidential_uncertainties: alpha must exceed 1");
  if (!(out.nu > 0.0) || !(out.beta > 0.0))
    throw std::invalid_argument("evidential_uncertainties: nu and beta must be positive");
  const double aleatoric = out.beta / (out.alpha - 1.0);
  return {aleatoric / out.nu, aleatoric};
}

KlDivergence kl_diag_gaussians(std::span<const double> q_means, std::span<const double> q_stds, double prior_std) {
  if (q_means.size() != q_stds.size()) throw std::invalid_argument("kl_diag_gaussians: length mismatch");
  if (!(prior_std > 0.0)) throw std::invalid_argument("kl_diag_gaussians: prior std must be positive");
  const double inv_p2 = 1.0 / (prior_std * prior_std);
  const double log_p = std::log(prior_std);
  KlDivergence out;
  out.d_mean.resize(q_means.size());
  out.d_std.resize(q_means.size());
  for (std::size_t i = 0; i < q_means.size(); ++i) {
    const double s = q_stds[i];
    const double m = q_means[i];
    if (!(s > 0.0)) throw std::invalid_argument("kl_diag_gaussians: posterior std must be positive");
    out.value += log_p - std::log(s) + 0.5 * (s * s + m * m) * inv_p2 - 0.5;
    out.d_mean[i] = m * inv_p2;
    out.d_std[i] = -1.0 / s + s * inv_p2;
  }
  return out;
}

double bbb_objective(double likelihood_value, double kl_value, double kl_weight) {
  return kl_weight * kl_value + likelihood_value;
}

}  // namespace censura
