#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "censura/dataset.hpp"
#include "censura/losses.hpp"
#include "censura/network.hpp"

namespace censura {

enum class LossKind {
  censored_mse,  ///< scalar head
  censored_nll,  ///< gaussian head, Tobit likelihood without the constant
  evidential,    ///< evidential head, observed labels only
  bbb,           ///< variational scalar head, KL + CensoredMSE of one weight sample
};

std::string_view to_string(LossKind k) noexcept;
LossKind loss_from_string(std::string_view s);

struct LossSpec {
  LossKind kind = LossKind::censored_mse;
  double evidential_lambda = 1.0;
  double prior_std = 1.0;
  /// Defaults to 1 / (training points) when unset.
  std::optional<double> kl_weight;

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

/// Throws std::invalid_argument when the head cannot be trained with the loss.
void check_compatible(const NetworkSpec& spec, const LossSpec& loss);

/// Loss value of transformed network outputs and its gradient with respect to
/// them (written to grad when non-null). The KL part of the bbb objective is
/// not included here; see kl_term().
double batch_loss(const LossSpec& loss, HeadKind head, const Eigen::MatrixXd& outputs, const BatchTargets& targets,
                  Eigen::MatrixXd* grad);

/// KL of the variational posterior against the prior, with gradients w.r.t.
/// means and rhos accumulated into grads (scaled by weight) when non-null.
double kl_term(const NetworkState& state, double prior_std, double weight, NetworkState* grads);

struct TrainConfig {
  double learning_rate = 1e-3;
  double scheduler_factor = 0.5;
  int scheduler_patience = 50;
  double weight_decay = 5e-4;
  bool decoupled_weight_decay = false;
  int max_epochs = 500;
  int batch_size = 256;
  int early_stop_patience = 100;
  std::uint64_t seed = 0;
  double rho_init = -5.0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double learning_rate = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  bool stopped_early = false;

  friend bool operator==(const TrainingLog&, const TrainingLog&) = default;
};

struct FitResult {
  NetworkState state;
  TrainingLog log;
};

/// Loss of the network in eval mode over a whole dataset, the quantity that
/// drives the scheduler and early stopping. For bbb it adds kl_weight * KL.
double dataset_loss(const NetworkState& state, const NetworkSpec& spec, const LossSpec& loss,
                    const CensoredDataset& data, double kl_weight);

/// Minibatch Adam with a plateau scheduler and early stopping on the
/// validation loss; returns the best-validation state. An empty validation
/// set falls back to the training loss. Throws NumericError on a non-finite
/// loss.
FitResult fit(const NetworkSpec& spec, const TrainConfig& config, const LossSpec& loss, const CensoredDataset& train,
              const CensoredDataset& validation);

/// Hyperparameter grid over network and optimiser settings.
struct HyperGrid {
  std::vector<double> learning_rates{5e-5, 1e-4, 5e-4, 1e-3};
  std::vector<double> scheduler_factors{0.1, 0.5};
  std::vector<int> hidden_layers{2, 3, 4};
  std::vector<int> hidden_dims{64, 128, 256, 512};
  std::vector<bool> decreasing_dims{false, true};
  std::vector<double> dropout_rates{0.25, 0.5, 0.75};

  std::size_t size() const noexcept;
};

struct GridEntry {
  NetworkSpec spec;
  TrainConfig config;
  double validation_loss = 0.0;
  std::string failure;  ///< non-empty when the fit diverged
};

struct GridResult {
  NetworkSpec spec;
  TrainConfig config;
  double validation_loss = 0.0;
  std::vector<GridEntry> entries;
};

/// Exhaustive search; every point is fit with max_epochs = search_epochs. The
/// lowest final validation loss wins; ties go to the smaller network and then
/// to the lower learning rate.
GridResult grid_search(const HyperGrid& grid, const NetworkSpec& base_spec, const TrainConfig& base_config,
                       const LossSpec& loss, const CensoredDataset& train, const CensoredDataset& validation,
                       int search_epochs = 100);

}  // namespace censura
