#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "censura/dataset.hpp"
#include "censura/forest.hpp"
#include "censura/network.hpp"
#include "censura/numerics.hpp"
#include "censura/training.hpp"

namespace censura {

/// Point prediction with whichever variance channels the model provides.
struct UncertainPrediction {
  double mean = 0.0;
  std::optional<double> aleatoric_variance;
  std::optional<double> epistemic_variance;

  friend bool operator==(const UncertainPrediction&, const UncertainPrediction&) = default;
};

enum class ModelKind {
  random_forest,
  ensemble,
  mc_dropout,
  bayes_by_backprop,
  gaussian,
  gaussian_ensemble,
  evidential,
};

std::string_view to_string(ModelKind k) noexcept;
ModelKind model_from_string(std::string_view s);
/// Every kind, in declaration order.
const std::vector<ModelKind>& all_model_kinds();

/// Head and loss each network kind trains with.
HeadKind model_head(ModelKind k);
LossKind model_loss(ModelKind k);
/// Evidential and random forest never see censored labels.
bool model_uses_censored_labels(ModelKind k) noexcept;

struct ModelSettings {
  ModelKind kind = ModelKind::gaussian;
  int ensemble_members = 50;
  int gaussian_ensemble_members = 5;
  /// Stochastic passes at inference for mc_dropout and bayes_by_backprop.
  int mc_samples = 500;
  ForestHyper forest;
  /// Architecture; input_dim, head and variational are filled in from the data
  /// and the kind.
  NetworkSpec network;
  TrainConfig train;
  double evidential_lambda = 1.0;
  double prior_std = 1.0;
  std::optional<double> kl_weight;
  /// Run the hyperparameter grid on the first member before training.
  bool grid_search = false;
  HyperGrid grid;
  int search_epochs = 100;

  /// Loss spec for the network kinds.
  LossSpec loss() const;
  /// Network spec for a given input width.
  NetworkSpec resolved_network(int input_dim) const;
  int member_count() const noexcept;
  void validate() const;
};

struct TrainingMetadata {
  std::string dataset_hash;
  std::uint64_t seed = 0;
  bool use_censored = true;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::size_t n_train_censored = 0;
  /// Seed for stochastic inference, derived from the run seed.
  std::uint64_t sampling_seed = 0;

  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

/// Immutable after training; safe to share across threads for prediction.
struct TrainedModel {
  ModelKind kind = ModelKind::gaussian;
  ModelSettings settings;
  NetworkSpec network;
  TrainConfig train_config;  ///< after grid selection, before per-member seeding
  std::vector<std::uint64_t> member_seeds;
  std::vector<NetworkState> members;
  std::vector<TrainingLog> logs;  ///< one per member; not part of the artifact
  RandomForest forest;
  TrainingMetadata metadata;

  std::size_t input_dim() const noexcept;
};

/// Mean and population variance (divisor K) of member predictions.
std::pair<double, double> ensemble_aggregate(std::span<const double> member_predictions);

/// Mixture summary of Gaussian members: mean of means, mean of variances as
/// aleatoric, population variance of means as epistemic.
UncertainPrediction gaussian_ensemble_aggregate(std::span<const GaussianParams> members);

/// Fits the model. With use_censored off both sets are first reduced to their
/// observed rows. Throws TrainingError when no observed training rows remain
/// for a kind that needs them.
TrainedModel train_model(const ModelSettings& settings, const CensoredDataset& train,
                         const CensoredDataset& validation, bool use_censored, std::uint64_t seed);

/// Predictions for every row of features. Stochastic kinds draw their noise
/// from sampling_seed, or from the seed stored in the model when unset.
std::vector<UncertainPrediction> predict(const TrainedModel& model, const Eigen::MatrixXd& features,
                                         std::optional<std::uint64_t> sampling_seed = std::nullopt);

void to_json(nlohmann::json& j, const ModelSettings& s);
/// Reads settings; "kind" is required, everything else defaults.
void from_json(const nlohmann::json& j, ModelSettings& s);
void to_json(nlohmann::json& j, const HyperGrid& g);
void from_json(const nlohmann::json& j, HyperGrid& g);
void to_json(nlohmann::json& j, const TrainingMetadata& m);
void from_json(const nlohmann::json& j, TrainingMetadata& m);
/// Artifact form: kind, settings, members or trees, and metadata. Training
/// logs are written separately.
void to_json(nlohmann::json& j, const TrainedModel& m);
void from_json(const nlohmann::json& j, TrainedModel& m);

void save_model(const std::filesystem::path& path, const TrainedModel& m);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace censura
