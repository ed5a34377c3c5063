#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "censura/dataset.hpp"
#include "censura/models.hpp"

namespace censura {

enum class MeanKind {
  linear,        ///< bias + w . x
  sine_mixture,  ///< bias + amplitude * sum_j sin(pi (j + 1) x_j) / sqrt(d)
  mlp_teacher,   ///< bias + amplitude * (random one-hidden-layer tanh network)
};

struct MeanFunction {
  MeanKind kind = MeanKind::linear;
  /// Linear weights; empty means 2/d for every feature.
  std::vector<double> weights;
  double bias = 6.5;
  double amplitude = 1.5;
  std::uint64_t teacher_seed = 0;
  int teacher_hidden = 16;
};

enum class NoiseKind {
  constant,  ///< sigma
  logistic,  ///< a + b * logistic(c * x_1)
};

struct NoiseProfile {
  NoiseKind kind = NoiseKind::constant;
  double sigma = 0.3;
  double a = 0.1;
  double b = 0.25;
  double c = 3.0;
};

enum class CensorKind {
  none,
  fixed_left,     ///< every y* below threshold is stored as (threshold, "<")
  quantile_left,  ///< as fixed_left with the threshold at the q-quantile of y*
  mixed,          ///< left below the q_left quantile, right above the 1 - q_right quantile
};

struct CensorRule {
  CensorKind kind = CensorKind::none;
  /// Non-finite disables censoring.
  double threshold = 0.0;
  double q_left = 0.0;
  double q_right = 0.0;
};

struct SynthSpec {
  std::size_t n_points = 1000;
  std::size_t feature_dim = 1;
  double feature_low = -1.0;
  double feature_high = 1.0;
  MeanFunction mean;
  NoiseProfile noise;
  CensorRule censor;
  /// Mean shift added per temporal fold (rows are split into five index
  /// blocks, fold k gets k * drift).
  double drift = 0.0;
  std::string start_date = "2000-01-01";

  /// Throws ConfigError when sigma can fall below 1e-3 or a quantile is out of
  /// range.
  void validate() const;
};

struct GroundTruth {
  std::vector<double> y_star;
  std::vector<double> true_mean;
  std::vector<double> true_sigma;
  /// Censoring threshold applied to each row; NaN when none applies.
  std::vector<double> threshold;
};

struct SynthResult {
  CensoredDataset data;
  GroundTruth truth;
};

/// Draws features uniformly, y* = mean(x) + sigma(x) * eps, then applies the
/// censoring rule. Thresholds never depend on the row's own y*: quantile rules
/// take their thresholds from an independent pilot sample. Bitwise
/// reproducible for a given (spec, seed).
SynthResult generate(const SynthSpec& spec, std::uint64_t seed);

/// Noise-free mean and sigma at arbitrary features (drift excluded).
double synth_mean(const SynthSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& x);
double synth_sigma(const SynthSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// True mean with aleatoric sigma^2 and zero epistemic variance.
std::vector<UncertainPrediction> oracle_predictions(const GroundTruth& gt);

/// The same rows labelled with their hidden y* and no censoring.
CensoredDataset uncensored_view(const CensoredDataset& data, const GroundTruth& gt);
/// Ground truth restricted to the given rows, in order.
GroundTruth subset(const GroundTruth& gt, std::span<const std::size_t> rows);

/// Columns id,y_star,true_mean,true_sigma.
void write_ground_truth_csv(const std::filesystem::path& path, std::span<const std::string> ids, const GroundTruth& gt);
struct GroundTruthTable {
  std::vector<std::string> ids;
  GroundTruth truth;
};
GroundTruthTable read_ground_truth_csv(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

}  // namespace censura
