#include "censura/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "censura/error.hpp"
#include "censura/log.hpp"
#include "censura/numerics.hpp"

namespace censura {

std::string_view to_string(LossKind k) noexcept {
  switch (k) {
    case LossKind::censored_mse: return "censored_mse";
    case LossKind::censored_nll: return "censored_nll";
    case LossKind::evidential: return "evidential";
    case LossKind::bbb: return "bbb";
  }
  return "censored_mse";
}

LossKind loss_from_string(std::string_view s) {
  if (s == "censored_mse") return LossKind::censored_mse;
  if (s == "censored_nll") return LossKind::censored_nll;
  if (s == "evidential") return LossKind::evidential;
  if (s == "bbb") return LossKind::bbb;
  throw std::invalid_argument("unknown loss '" + std::string(s) + "'");
}

void check_compatible(const NetworkSpec& spec, const LossSpec& loss) {
  bool ok = false;
  switch (loss.kind) {
    case LossKind::censored_mse: ok = spec.head == HeadKind::scalar; break;
    case LossKind::censored_nll: ok = spec.head == HeadKind::gaussian; break;
    case LossKind::evidential: ok = spec.head == HeadKind::evidential; break;
    case LossKind::bbb: ok = spec.head == HeadKind::scalar && spec.variational; break;
  }
  if (!ok) {
    throw std::invalid_argument("loss '" + std::string(to_string(loss.kind)) + "' cannot train a " +
                                std::string(to_string(spec.head)) + (spec.variational ? " variational" : "") +
                                " network");
  }
  if (spec.variational && loss.kind != LossKind::bbb)
    throw std::invalid_argument("variational networks must be trained with the bbb objective");
  if (!(loss.prior_std > 0.0)) throw std::invalid_argument("prior std must be positive");
  if (loss.kl_weight && !(*loss.kl_weight > 0.0)) throw std::invalid_argument("kl_weight must be positive");
}

double batch_loss(const LossSpec& loss, HeadKind head, const Eigen::MatrixXd& outputs, const BatchTargets& targets,
                  Eigen::MatrixXd* grad) {
  const auto rows = static_cast<std::size_t>(outputs.rows());
  if (rows != targets.size()) throw std::invalid_argument("batch_loss: output/target length mismatch");
  if (outputs.cols() != head_width(head)) throw std::invalid_argument("batch_loss: output width does not match head");
  if (grad) *grad = Eigen::MatrixXd::Zero(outputs.rows(), outputs.cols());

  switch (loss.kind) {
    case LossKind::censored_mse:
    case LossKind::bbb: {
      std::vector<double> mu(rows);
      for (std::size_t i = 0; i < rows; ++i) mu[i] = outputs(static_cast<Eigen::Index>(i), 0);
      auto res = censored_mse(mu, targets);
      if (grad)
        for (std::size_t i = 0; i < rows; ++i) (*grad)(static_cast<Eigen::Index>(i), 0) = res.d_mean[i];
      return res.value;
    }
    case LossKind::censored_nll: {
      std::vector<GaussianParams> params;
      params.reserve(rows);
      for (std::size_t i = 0; i < rows; ++i)
        params.emplace_back(outputs(static_cast<Eigen::Index>(i), 0), outputs(static_cast<Eigen::Index>(i), 1));
      auto res = censored_nll(params, targets, false);
      if (grad)
        for (std::size_t i = 0; i < rows; ++i) {
          (*grad)(static_cast<Eigen::Index>(i), 0) = res.d_mean[i];
          (*grad)(static_cast<Eigen::Index>(i), 1) = res.d_variance[i];
        }
      return res.value;
    }
    case LossKind::evidential: {
      std::vector<EvidentialOutput> out(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out[i] = {outputs(r, 0), outputs(r, 1), outputs(r, 2), outputs(r, 3)};
      }
      auto res = evidential_loss(out, targets.labels, loss.evidential_lambda);
      if (grad)
        for (std::size_t i = 0; i < rows; ++i) {
          const auto r = static_cast<Eigen::Index>(i);
          (*grad)(r, 0) = res.d_gamma[i];
          (*grad)(r, 1) = res.d_nu[i];
          (*grad)(r, 2) = res.d_alpha[i];
          (*grad)(r, 3) = res.d_beta[i];
        }
      return res.value;
    }
  }
  throw std::invalid_argument("batch_loss: unknown loss");
}

double kl_term(const NetworkState& state, double prior_std, double weight, NetworkState* grads) {
  if (!state.variational()) return 0.0;
  double total = 0.0;
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    const auto& layer = state.layers[l];
    auto one = [&](std::span<const double> means, std::span<const double> rhos, std::span<double> g_mean,
                   std::span<double> g_rho) {
      std::vector<double> stds(rhos.size());
      for (std::size_t i = 0; i < rhos.size(); ++i) stds[i] = softplus(rhos[i]);
      auto kl = kl_diag_gaussians(means, stds, prior_std);
      total += kl.value;
      if (grads) {
        for (std::size_t i = 0; i < means.size(); ++i) {
          g_mean[i] += weight * kl.d_mean[i];
          g_rho[i] += weight * kl.d_std[i] * logistic(rhos[i]);
        }
      }
    };
    std::span<double> gw, gb, gwr, gbr;
    if (grads) {
      auto& gl = grads->layers[l];
      gw = {gl.weight.data(), static_cast<std::size_t>(gl.weight.size())};
      gb = {gl.bias.data(), static_cast<std::size_t>(gl.bias.size())};
      gwr = {gl.weight_rho.data(), static_cast<std::size_t>(gl.weight_rho.size())};
      gbr = {gl.bias_rho.data(), static_cast<std::size_t>(gl.bias_rho.size())};
    }
    one({layer.weight.data(), static_cast<std::size_t>(layer.weight.size())},
        {layer.weight_rho.data(), static_cast<std::size_t>(layer.weight_rho.size())}, gw, gwr);
    one({layer.bias.data(), static_cast<std::size_t>(layer.bias.size())},
        {layer.bias_rho.data(), static_cast<std::size_t>(layer.bias_rho.size())}, gb, gbr);
  }
  return total;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (!(scheduler_factor > 0.0 && scheduler_factor < 1.0))
    throw std::invalid_argument("TrainConfig: scheduler_factor must lie in (0, 1)");
  if (scheduler_patience < 0 || early_stop_patience < 1)
    throw std::invalid_argument("TrainConfig: patience values must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay must be non-negative");
  if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
}

namespace {

struct Batch {
  Eigen::MatrixXd x;
  std::vector<double> labels;
  std::vector<Censoring> masks;
};

Batch gather(const CensoredDataset& ds, std::span<const std::size_t> rows) {
  Batch b;
  b.x.resize(static_cast<Eigen::Index>(rows.size()), ds.features().cols());
  b.labels.reserve(rows.size());
  b.masks.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    b.x.row(static_cast<Eigen::Index>(k)) = ds.features().row(static_cast<Eigen::Index>(rows[k]));
    b.labels.push_back(ds.labels()[rows[k]]);
    b.masks.push_back(ds.masks()[rows[k]]);
  }
  return b;
}

}  // namespace

double dataset_loss(const NetworkState& state, const NetworkSpec& spec, const LossSpec& loss,
                    const CensoredDataset& data, double kl_weight) {
  if (data.empty()) throw std::invalid_argument("dataset_loss: empty dataset");
  constexpr std::size_t kChunk = 4096;
  CounterRng unused(0);
  double sum = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const Batch b = gather(data, rows);
    const Eigen::MatrixXd out = forward(state, spec, b.x, Mode::eval, unused);
    if (!out.allFinite()) return std::numeric_limits<double>::quiet_NaN();
    sum += batch_loss(loss, spec.head, out, {b.labels, b.masks}, nullptr) * static_cast<double>(rows.size());
  }
  double value = sum / static_cast<double>(data.size());
  if (loss.kind == LossKind::bbb) value += kl_weight * kl_term(state, loss.prior_std, 0.0, nullptr);
  return value;
}

FitResult fit(const NetworkSpec& spec, const TrainConfig& config, const LossSpec& loss, const CensoredDataset& train,
              const CensoredDataset& validation) {
  spec.validate();
  config.validate();
  check_compatible(spec, loss);
  if (train.empty()) throw std::invalid_argument("fit: empty training set");
  if (train.dim() != static_cast<std::size_t>(spec.input_dim))
    throw std::invalid_argument("fit: training features do not match the network input width");
  if (!validation.empty() && validation.dim() != train.dim())
    throw std::invalid_argument("fit: validation features do not match the training features");

  NetworkState state = init_state(spec, config.seed, config.rho_init);
  AdamState opt = make_adam_state(state);
  AdamConfig adam{config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay, config.decoupled_weight_decay};

  const std::size_t n = train.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n);
  const std::size_t n_batches = (n + bs - 1) / bs;
  // The data term is a per-point mean, so the full-dataset KL is spread as KL / N.
  const double kl_weight = loss.kl_weight.value_or(1.0 / static_cast<double>(n));
  const CensoredDataset& monitor = validation.empty() ? train : validation;

  FitResult result;
  NetworkState best_state = state;
  double best = std::numeric_limits<double>::infinity();
  double sched_best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  std::vector<std::size_t> perm(n);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    CounterRng shuffle(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[shuffle.below(i)]);
    CounterRng noise(derive_seed(config.seed, "noise", static_cast<std::uint64_t>(epoch)));

    double epoch_sum = 0.0;
    ForwardTape tape;
    Eigen::MatrixXd out_grad;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t start = b * bs;
      const std::size_t end = std::min(n, start + bs);
      const Batch batch = gather(train, std::span<const std::size_t>(perm).subspan(start, end - start));
      const Eigen::MatrixXd out = forward(state, spec, batch.x, Mode::train, noise, &tape);
      if (!out.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite network output at epoch " << epoch << ", batch " << b;
        throw NumericError(msg.str());
      }
      double value = batch_loss(loss, spec.head, out, {batch.labels, batch.masks}, &out_grad);
      NetworkState grads = backward(state, spec, tape, out_grad);
      if (loss.kind == LossKind::bbb)
        value = bbb_objective(value, kl_term(state, loss.prior_std, kl_weight, &grads), kl_weight);
      if (!std::isfinite(value) || !grads.all_finite()) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch " << b;
        throw NumericError(msg.str());
      }
      epoch_sum += value * static_cast<double>(end - start);
      adam_step(state, grads, opt, adam);
    }

    const double val = dataset_loss(state, spec, loss, monitor, kl_weight);
    if (!std::isfinite(val)) {
      std::ostringstream msg;
      msg << "non-finite validation loss at epoch " << epoch;
      throw NumericError(msg.str());
    }
    result.log.epochs.push_back({epoch, epoch_sum / static_cast<double>(n), val, adam.learning_rate});

    if (val < best) {
      best = val;
      best_state = state;
      result.log.best_epoch = epoch;
    } else if (epoch - result.log.best_epoch >= config.early_stop_patience) {
      result.log.stopped_early = true;
      break;
    }

    // Plateau scheduler with a relative improvement threshold of 1e-4.
    if (val < sched_best - 1e-4 * std::abs(sched_best)) {
      sched_best = val;
      bad_epochs = 0;
    } else if (++bad_epochs > config.scheduler_patience) {
      adam.learning_rate *= config.scheduler_factor;
      bad_epochs = 0;
    }
  }

  result.state = std::move(best_state);
  result.log.best_validation_loss = best;
  return result;
}

std::size_t HyperGrid::size() const noexcept {
  return learning_rates.size() * scheduler_factors.size() * hidden_layers.size() * hidden_dims.size() *
         decreasing_dims.size() * dropout_rates.size();
}

GridResult grid_search(const HyperGrid& grid, const NetworkSpec& base_spec, const TrainConfig& base_config,
                       const LossSpec& loss, const CensoredDataset& train, const CensoredDataset& validation,
                       int search_epochs) {
  if (grid.size() == 0) throw std::invalid_argument("grid_search: empty grid");
  GridResult result;
  const GridEntry* best = nullptr;
  auto better = [](const GridEntry& a, const GridEntry& b) {
    if (a.validation_loss != b.validation_loss) return a.validation_loss < b.validation_loss;
    const auto pa = a.spec.parameter_count();
    const auto pb = b.spec.parameter_count();
    if (pa != pb) return pa < pb;
    return a.config.learning_rate < b.config.learning_rate;
  };

  for (double lr : grid.learning_rates)
    for (double factor : grid.scheduler_factors)
      for (int layers : grid.hidden_layers)
        for (int dim : grid.hidden_dims)
          for (bool decreasing : grid.decreasing_dims)
            for (double dropout : grid.dropout_rates) {
              GridEntry e;
              e.spec = base_spec;
              e.spec.hidden_layers = layers;
              e.spec.hidden_dim = dim;
              e.spec.decreasing_dim = decreasing;
              e.spec.dropout_rate = dropout;
              e.config = base_config;
              e.config.learning_rate = lr;
              e.config.scheduler_factor = factor;
              e.config.max_epochs = search_epochs;
              try {
                e.validation_loss = fit(e.spec, e.config, loss, train, validation).log.best_validation_loss;
              } catch (const NumericError& err) {
                e.validation_loss = std::numeric_limits<double>::infinity();
                e.failure = err.what();
                log::warning(std::string("grid point diverged: ") + err.what());
              }
              result.entries.push_back(std::move(e));
            }

  for (const auto& e : result.entries) {
    if (!e.failure.empty()) continue;
    if (!best || better(e, *best)) best = &e;
  }
  if (!best) {
    std::ostringstream msg;
    msg << "grid search: all " << result.entries.size() << " configurations diverged";
    for (const auto& e : result.entries) msg << "\n  " << e.failure;
    throw SearchError(msg.str());
  }
  result.spec = best->spec;
  result.config = best->config;
  result.config.max_epochs = base_config.max_epochs;
  result.validation_loss = best->validation_loss;
  return result;
}

}  // namespace censura
