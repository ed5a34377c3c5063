#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace censura {

/// Relation between the recorded label and the unobserved true value.
/// left: true value lies below the recorded threshold ("<").
/// right: true value lies above the recorded threshold (">").
enum class Censoring : int { left = -1, observed = 0, right = 1 };

/// Throws std::invalid_argument for integers outside {-1, 0, 1}.
Censoring censoring_from_int(int mask);
inline int to_int(Censoring c) noexcept { return static_cast<int>(c); }
char relation_token(Censoring c) noexcept;
/// Parses "<", "=", ">"; returns nullopt for anything else.
std::optional<Censoring> censoring_from_token(std::string_view token) noexcept;

using Date = std::chrono::sys_days;

/// Parses an ISO-8601 calendar date (YYYY-MM-DD).
std::optional<Date> parse_iso_date(std::string_view text) noexcept;
std::string format_iso_date(Date d);

/// Feature matrix with labels, censoring masks, dates and record ids. Immutable
/// after construction; the constructor validates every invariant.
class CensoredDataset {
 public:
  CensoredDataset() = default;
  CensoredDataset(Eigen::MatrixXd features, std::vector<double> labels, std::vector<Censoring> masks,
                  std::vector<Date> dates, std::vector<std::string> ids);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }

  const Eigen::MatrixXd& features() const noexcept { return features_; }
  std::span<const double> labels() const noexcept { return labels_; }
  std::span<const Censoring> masks() const noexcept { return masks_; }
  std::span<const Date> dates() const noexcept { return dates_; }
  std::span<const std::string> ids() const noexcept { return ids_; }

  std::size_t n_censored() const noexcept;
  std::size_t n_observed() const noexcept { return size() - n_censored(); }

  /// Rows at the given indices, in the given order.
  CensoredDataset subset(std::span<const std::size_t> rows) const;

  /// Order-sensitive FNV-1a digest of features, labels, masks, dates and ids.
  std::string content_hash() const;

  friend bool operator==(const CensoredDataset& a, const CensoredDataset& b);

 private:
  Eigen::MatrixXd features_;
  std::vector<double> labels_;
  std::vector<Censoring> masks_;
  std::vector<Date> dates_;
  std::vector<std::string> ids_;
};

/// Per-column label transform applied at load time.
enum class LabelTransform {
  none,
  log10,
  /// -log10 of a concentration (pIC50-style). Concentrations are multiplied by
  /// molar_scale first. Because the transform is decreasing, "<" and ">"
  /// swap meaning.
  neg_log10_molar,
};

struct ColumnSchema {
  std::string id_column = "id";
  std::string date_column = "date";
  std::string value_column = "value";
  std::string relation_column = "relation";
  /// Dense feature columns are every header name with this prefix followed by
  /// an integer, ordered by that integer.
  std::string dense_prefix = "f";
  /// Name of the sparse "index:value index:value" column, used when no dense
  /// columns are present.
  std::string sparse_column = "sparse";
  /// Width of the sparse feature space; inferred from the largest index when
  /// unset.
  std::optional<std::size_t> sparse_dim;
  LabelTransform transform = LabelTransform::none;
  double molar_scale = 1.0;
};

CensoredDataset load_csv(const std::filesystem::path& path, const ColumnSchema& schema = {});

/// Writes the dense CSV layout read by load_csv (labels written as stored,
/// no transform).
void write_csv(const std::filesystem::path& path, const CensoredDataset& ds);

struct DuplicateSpread {
  std::string id;
  std::size_t n_observed = 0;
  double stddev = 0.0;
};

struct DuplicateStats {
  std::size_t groups_merged = 0;
  /// Groups with at least three observed values and a nonzero spread.
  std::vector<DuplicateSpread> spreads;
  /// Censored-only groups whose modal threshold was tied across "<" and ">".
  std::vector<std::string> mixed_direction_ties;
};

struct AggregatedDataset {
  CensoredDataset data;
  DuplicateStats stats;
};

/// Collapses rows sharing an id into one row. Observed values take precedence
/// (median); otherwise the most common censored threshold is kept. The
/// earliest date across the group is used. Output keeps first-appearance order.
AggregatedDataset aggregate_duplicates(const CensoredDataset& ds);

struct ControlExtraction {
  CensoredDataset data;
  double control_stddev = 0.0;
};

/// Removes every row of the control compound and returns the sample standard
/// deviation of its observed measurements.
ControlExtraction extract_control(const CensoredDataset& ds, std::string_view control_id);

CensoredDataset observed_subset(const CensoredDataset& ds);

/// One train/validation/test arrangement of the five folds (1-based).
struct TemporalSetting {
  std::vector<int> train_folds;
  int validation_fold = 0;
  int test_fold = 0;
};

struct TemporalSettings {
  std::array<std::vector<std::size_t>, 5> folds;
  std::array<TemporalSetting, 3> settings;

  /// Row indices of the training folds of setting (1-based), concatenated in
  /// fold order.
  std::vector<std::size_t> train_rows(int setting) const;
  const std::vector<std::size_t>& validation_rows(int setting) const;
  const std::vector<std::size_t>& test_rows(int setting) const;
};

/// Date-ordered five-fold partition balanced on the number of observed
/// labels. Rows sharing a date always land in the same fold.
TemporalSettings temporal_split(const CensoredDataset& ds);

struct SplitData {
  CensoredDataset train;
  CensoredDataset validation;
  CensoredDataset test;
};
SplitData materialize_setting(const CensoredDataset& ds, const TemporalSettings& split, int setting);

/// Demo featuriser: character 2- and 3-grams hashed into dim binary buckets.
Eigen::MatrixXd hash_featurize(std::span<const std::string> tokens, std::size_t dim);

}  // namespace censura
