#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "censura/evaluation.hpp"
#include "censura/models.hpp"
#include "censura/significance.hpp"

namespace censura::cli {

/// Process exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitNumeric = 3 };

/// Maps the active exception to an exit code and writes a diagnostic.
int report_exception(std::ostream& err);

struct SplitOptions {
  std::filesystem::path input;
  std::filesystem::path out;
};
/// Writes split.json and setting{1,2,3}_{train,validation,test}.csv.
void cmd_split(const SplitOptions& o, std::ostream& msg);

struct SynthOptions {
  std::filesystem::path spec;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};
/// Writes data.csv, ground_truth.csv and spec.json (with the seed).
void cmd_synth(const SynthOptions& o, std::ostream& msg);

struct TrainOptions {
  std::filesystem::path config;
  int setting = 1;
  ModelKind model = ModelKind::gaussian;
  bool censored = true;
  std::optional<std::filesystem::path> out;  ///< defaults to the config's output_dir
  std::optional<std::uint64_t> seed;         ///< defaults to the config's seed
};
struct TrainOutputs {
  std::filesystem::path model;
  std::filesystem::path log;
  std::filesystem::path test_csv;
};
/// Trains one model on one temporal setting. Writes the artifact
/// <kind>_s<setting>_<on|off>.model.json, its training log and the setting's
/// test fold as CSV.
TrainOutputs cmd_train(const TrainOptions& o, std::ostream& msg);

struct EvaluateOptions {
  std::optional<std::filesystem::path> model;
  /// Alternative to model: a prediction table (id,mean,aleatoric,epistemic).
  std::optional<std::filesystem::path> predictions;
  std::filesystem::path test;
  std::size_t bins = 10;
  std::optional<VarianceSource> source;
  std::optional<std::uint64_t> sampling_seed;
  std::filesystem::path out = ".";
};
/// Writes report.json, calibration.csv and ence_bins.csv.
EvaluationReport cmd_evaluate(const EvaluateOptions& o, std::ostream& msg);

struct AblateOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
};
/// Trains every (model, setting, arm, repeat) of the config, writes per-arm
/// reports under reports/, ablation.json and ablation.csv. Returns the
/// ablation document.
nlohmann::json cmd_ablate(const AblateOptions& o, std::ostream& msg);

struct CompareOptions {
  std::string reports_glob;
  std::string metric = "mse";
  double alpha = 0.05;
  std::optional<std::filesystem::path> out;
};
/// Pools report repeats per model name and ranks them with significance
/// stars. Writes comparison.json and comparison.csv when out is set.
std::vector<RankedModel> cmd_compare(const CompareOptions& o, std::ostream& msg);

/// Files matching a pattern whose last path component may contain * and ?.
std::vector<std::filesystem::path> expand_glob(const std::string& pattern);

}  // namespace censura::cli
