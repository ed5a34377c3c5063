#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "censura/losses.hpp"
#include "censura/models.hpp"

namespace censura {

enum class VarianceSource { aleatoric, epistemic };

std::string_view to_string(VarianceSource s) noexcept;
VarianceSource variance_source_from_string(std::string_view s);

/// Variance of the selected channel. Epistemic variances get the 1e-6 floor
/// added so that collapsed ensembles still define a density. Throws
/// std::invalid_argument naming model_name when the channel is missing.
double predictive_variance(const UncertainPrediction& p, VarianceSource source, std::string_view model_name = {});

/// Aleatoric when the prediction carries it, otherwise epistemic.
VarianceSource default_variance_source(const UncertainPrediction& p);

/// Mean squared one-sided error of the predicted means.
double eval_mse(std::span<const UncertainPrediction> preds, const BatchTargets& targets);

/// Tobit NLL with every constant, averaged over points.
double eval_nll(std::span<const UncertainPrediction> preds, const BatchTargets& targets, VarianceSource source,
                std::string_view model_name = {});

struct EnceBin {
  std::size_t count = 0;
  double rmse = 0.0;
  double rmv = 0.0;
};

/// Equal-count bins over points sorted by predicted variance (ties broken by
/// squared error, so the result does not depend on input order). The first
/// M mod n_bins bins take one extra point.
std::vector<EnceBin> ence_bins(std::span<const UncertainPrediction> preds, const BatchTargets& targets,
                               VarianceSource source, std::size_t n_bins);
/// Mean over bins of |RMSE - RMV| / RMV. Throws NumericError for a bin with
/// zero RMV.
double ence_from_bins(std::span<const EnceBin> bins);
double eval_ence(std::span<const UncertainPrediction> preds, const BatchTargets& targets, VarianceSource source,
                 std::size_t n_bins = 10);

struct CalibrationCurve {
  std::vector<double> expected;
  std::vector<double> observed;

  double max_deviation() const;
};

/// {0, 0.05, ..., 1}.
std::vector<double> default_calibration_grid();

/// Fraction of points whose one-sided error lies inside the central
/// p-interval of the predictive Gaussian, for every p in the grid.
CalibrationCurve calibration_curve(std::span<const UncertainPrediction> preds, const BatchTargets& targets,
                                   VarianceSource source, std::span<const double> grid);

/// Inverse standard-normal CDF: rational approximation refined by one Halley
/// step. Throws std::invalid_argument outside (0, 1).
double inverse_normal_cdf(double p);

struct EvaluationOptions {
  std::optional<VarianceSource> source;  ///< default_variance_source() of the first point when unset
  std::size_t n_bins = 10;
  std::vector<double> grid = default_calibration_grid();
  std::string model_name;
};

/// Scores of one evaluation, kept per repeat so reports can be pooled.
struct RepeatScores {
  std::vector<double> mse;
  std::vector<double> nll;
  std::vector<double> ence;

  const std::vector<double>& metric(std::string_view name) const;
};

struct EvaluationReport {
  std::string model_name;
  VarianceSource source = VarianceSource::aleatoric;
  double mse = 0.0;
  double nll = 0.0;
  double ence = 0.0;
  CalibrationCurve calibration;
  std::vector<EnceBin> bins;
  std::size_t n_points = 0;
  std::size_t n_censored = 0;
  RepeatScores repeats;
  /// Free-form provenance: resolved configuration, seeds, paths.
  nlohmann::json context = nlohmann::json::object();
};

EvaluationReport evaluate(std::span<const UncertainPrediction> preds, const BatchTargets& targets,
                          const EvaluationOptions& options = {});

void to_json(nlohmann::json& j, const EvaluationReport& r);
void from_json(const nlohmann::json& j, EvaluationReport& r);

/// Columns expected,observed.
void write_calibration_csv(const std::filesystem::path& path, const CalibrationCurve& curve);
/// Columns bin,rmse,rmv (bin is 1-based).
void write_ence_csv(const std::filesystem::path& path, std::span<const EnceBin> bins);

/// Prediction table with columns id,mean,aleatoric,epistemic; missing
/// channels are left empty.
void write_predictions_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                           std::span<const UncertainPrediction> preds);
struct PredictionTable {
  std::vector<std::string> ids;
  std::vector<UncertainPrediction> predictions;
};
PredictionTable read_predictions_csv(const std::filesystem::path& path);

}  // namespace censura
