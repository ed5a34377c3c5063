#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace censura {

/// A min_samples value: numbers below 1 are fractions of the training size,
/// anything else an absolute count.
struct SampleCount {
  double value = 2.0;

  std::size_t resolve(std::size_t n_train) const;
  friend bool operator==(const SampleCount&, const SampleCount&) = default;
};

struct ForestHyper {
  std::size_t n_estimators = 100;
  SampleCount min_samples_leaf{2.0};
  /// A value of 1 cannot split anything and is raised to 2.
  SampleCount min_samples_split{2.0};

  friend bool operator==(const ForestHyper&, const ForestHyper&) = default;
};

/// Flat binary regression tree. Leaves have feature == -1.
struct RegressionTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    std::size_t n_samples = 0;

    friend bool operator==(const Node&, const Node&) = default;
  };
  std::vector<Node> nodes;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  std::size_t leaf_count() const noexcept;

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

/// Greedy CART on squared error over axis-aligned thresholds, considering
/// every feature at every split. rows selects (with repetition) the samples.
RegressionTree fit_tree(const Eigen::MatrixXd& x, std::span<const double> y, std::span<const std::size_t> rows,
                        std::size_t min_samples_leaf, std::size_t min_samples_split);

struct RandomForest {
  std::vector<RegressionTree> trees;
  std::size_t input_dim = 0;

  /// Per-tree predictions for every row: (rows x trees).
  Eigen::MatrixXd tree_predictions(const Eigen::MatrixXd& x) const;

  friend bool operator==(const RandomForest&, const RandomForest&) = default;
};

/// Bagged CART: every tree sees a bootstrap sample of the same size as the
/// training set.
RandomForest forest_fit(const ForestHyper& hyper, const Eigen::MatrixXd& x, std::span<const double> y,
                        std::uint64_t seed);

void to_json(nlohmann::json& j, const ForestHyper& h);
void from_json(const nlohmann::json& j, ForestHyper& h);
void to_json(nlohmann::json& j, const RandomForest& f);
void from_json(const nlohmann::json& j, RandomForest& f);

}  // namespace censura
