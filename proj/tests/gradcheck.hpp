#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "censura/network.hpp"
#include "censura/training.hpp"

namespace censura::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t n_params = 0;
};

/// Compares backward() (plus the KL gradient for variational nets) against
/// central differences of the full loss, holding dropout masks and weight
/// noise fixed by replaying the same noise seed.
inline GradCheckResult check_network_gradients(const NetworkSpec& spec, const LossSpec& loss, std::uint64_t seed,
                                               std::size_t batch_rows = 5, double h = 1e-5) {
  CounterRng data_rng(derive_seed(seed, "data"));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(batch_rows), spec.input_dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = data_rng.uniform(-1.0, 1.0);
  std::vector<double> labels(batch_rows);
  std::vector<Censoring> masks(batch_rows);
  for (std::size_t i = 0; i < batch_rows; ++i) {
    labels[i] = data_rng.normal();
    const int m = loss.kind == LossKind::evidential ? 0 : static_cast<int>(data_rng.below(3)) - 1;
    masks[i] = censoring_from_int(m);
  }
  const BatchTargets targets{labels, masks};
  const std::uint64_t noise_seed = derive_seed(seed, "noise");
  const double kl_weight = loss.kl_weight.value_or(0.1);
  const Mode mode = Mode::train;

  auto total_loss = [&](const NetworkState& st) {
    CounterRng rng(noise_seed);
    const auto out = forward(st, spec, x, mode, rng);
    double v = batch_loss(loss, spec.head, out, targets, nullptr);
    if (loss.kind == LossKind::bbb) v += kl_weight * kl_term(st, loss.prior_std, 1.0, nullptr);
    return v;
  };

  NetworkState state = init_state(spec, derive_seed(seed, "init"), -3.0);
  CounterRng rng(noise_seed);
  ForwardTape tape;
  const auto out = forward(state, spec, x, mode, rng, &tape);
  Eigen::MatrixXd grad;
  batch_loss(loss, spec.head, out, targets, &grad);
  NetworkState analytic = backward(state, spec, tape, grad);
  if (loss.kind == LossKind::bbb) kl_term(state, loss.prior_std, kl_weight, &analytic);

  GradCheckResult res;
  auto params = state.tensors();
  auto grads = analytic.tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double saved = params[t][i];
      params[t][i] = saved + h;
      const double up = total_loss(state);
      params[t][i] = saved - h;
      const double down = total_loss(state);
      params[t][i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = grads[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / denom);
      ++res.n_params;
    }
  }
  return res;
}

}  // namespace censura::testing
