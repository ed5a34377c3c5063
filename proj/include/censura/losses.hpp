#pragma once

#include <span>
#include <vector>

#include "censura/dataset.hpp"
#include "censura/numerics.hpp"

namespace censura {

/// Labels and censoring masks for one batch. Labels hold the measured value
/// for observed rows and the threshold for censored rows.
struct BatchTargets {
  std::span<const double> labels;
  std::span<const Censoring> masks;

  std::size_t size() const noexcept { return labels.size(); }
  /// Throws std::invalid_argument on length mismatch or out-of-range masks.
  void validate() const;
};

/// Outputs of a normal-inverse-gamma head.
struct EvidentialOutput {
  double gamma = 0.0;
  double nu = 1.0;
  double alpha = 2.0;
  double beta = 1.0;

  /// nu > 0, alpha > 1, beta > 0, all finite.
  bool valid() const noexcept;
};

/// One-sided residual: y - mu for observed rows, and for censored rows the
/// residual only when the prediction falls on the wrong side of the threshold.
double censored_error(double mu, double label, Censoring mask);

struct MseLoss {
  double value = 0.0;
  std::vector<double> d_mean;
};

/// Mean of squared one-sided residuals and its gradient with respect to each
/// prediction.
MseLoss censored_mse(std::span<const double> mu, const BatchTargets& targets);

struct GaussianLoss {
  double value = 0.0;
  std::vector<double> d_mean;
  std::vector<double> d_variance;
};

/// Tobit negative log-likelihood, averaged over the batch. Observed rows use the
/// Gaussian density; left-censored rows the CDF mass below the threshold;
/// right-censored rows the survival mass above it. The 0.5 log(2 pi) constant
/// of the density term is added only when include_constant is set.
GaussianLoss censored_nll(std::span<const GaussianParams> params, const BatchTargets& targets,
                          bool include_constant);

/// Per-point Tobit term (no averaging), with the constant included.
double censored_nll_term(const GaussianParams& p, double label, Censoring mask);

struct EvidentialLoss {
  double value = 0.0;
  std::vector<double> d_gamma;
  std::vector<double> d_nu;
  std::vector<double> d_alpha;
  std::vector<double> d_beta;
};

/// Normal-inverse-gamma negative log marginal likelihood plus the
/// lambda |y - gamma| (2 nu + alpha) evidence regulariser, batch mean.
EvidentialLoss evidential_loss(std::span<const EvidentialOutput> out, std::span<const double> y, double lambda);

struct UncertaintyPair {
  double epistemic = 0.0;
  double aleatoric = 0.0;
};

/// epistemic = beta / (nu (alpha - 1)), aleatoric = beta / (alpha - 1).
UncertaintyPair evidential_uncertainties(const EvidentialOutput& out);

struct KlDivergence {
  double value = 0.0;
  std::vector<double> d_mean;
  std::vector<double> d_std;
};

/// KL(q || p) for a fully factorised Gaussian q against a zero-mean isotropic
/// Gaussian prior, summed over parameters.
KlDivergence kl_diag_gaussians(std::span<const double> q_means, std::span<const double> q_stds, double prior_std);

/// Variational free energy for one weight sample: kl_weight * KL + data term.
double bbb_objective(double likelihood_value, double kl_value, double kl_weight);

}  // namespace censura
