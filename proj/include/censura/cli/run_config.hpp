#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "censura/dataset.hpp"
#include "censura/evaluation.hpp"
#include "censura/models.hpp"
#include "censura/synth.hpp"

namespace censura::cli {

/// Experiment description read from a JSON document. Relative paths are
/// resolved against the directory of the config file.
struct RunConfig {
  // Data source: exactly one of csv or synth.
  std::optional<std::filesystem::path> csv;
  ColumnSchema schema;
  bool aggregate_duplicates = false;
  std::optional<std::string> control_id;
  std::optional<SynthSpec> synth;
  std::uint64_t synth_seed = 0;

  std::vector<ModelSettings> models;
  std::vector<bool> use_censored{true, false};
  int repeats = 10;
  std::uint64_t seed = 0;
  std::vector<int> settings{1, 2, 3};
  std::filesystem::path output_dir = "censura_out";

  std::size_t bins = 10;
  std::optional<VarianceSource> variance_source;
  bool one_sided = false;
  double alpha = 0.05;
  bool write_predictions = false;

  /// Settings for a model kind: the configured entry, or defaults.
  ModelSettings model(ModelKind kind) const;
  void validate() const;
};

/// Throws ConfigError on a missing file, malformed JSON or invalid values.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Fully resolved configuration, for embedding in reports.
nlohmann::json to_json(const RunConfig& c);

struct LoadedData {
  CensoredDataset data;
  std::optional<GroundTruth> truth;  ///< present for synthetic data
  std::optional<double> control_stddev;
};

LoadedData load_data(const RunConfig& c);

}  // namespace censura::cli
