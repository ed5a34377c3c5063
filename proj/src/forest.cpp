#include "censura/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "censura/log.hpp"
#include "censura/random.hpp"

namespace censura {

std::size_t SampleCount::resolve(std::size_t n_train) const {
  if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument("min_samples value must be positive");
  if (value < 1.0) return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(value * static_cast<double>(n_train))));
  return static_cast<std::size_t>(value);
}

double RegressionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  int k = 0;
  while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
    const auto& n = nodes[static_cast<std::size_t>(k)];
    k = x(n.feature) <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(k)].value;
}

std::size_t RegressionTree::leaf_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.feature < 0; }));
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  std::size_t n_left = 0;
  double score = 0.0;  // sum_l^2/n_l + sum_r^2/n_r, larger is better
};

}  // namespace

RegressionTree fit_tree(const Eigen::MatrixXd& x, std::span<const double> y, std::span<const std::size_t> rows,
                        std::size_t min_samples_leaf, std::size_t min_samples_split) {
  if (rows.empty()) throw std::invalid_argument("fit_tree: no samples");
  min_samples_leaf = std::max<std::size_t>(min_samples_leaf, 1);
  min_samples_split = std::max<std::size_t>(min_samples_split, 2);

  RegressionTree tree;
  struct Pending {
    int node;
    std::vector<std::size_t> rows;
  };
  std::vector<Pending> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, std::vector<std::size_t>(rows.begin(), rows.end())});

  std::vector<std::size_t> order;
  while (!stack.empty()) {
    Pending job = std::move(stack.back());
    stack.pop_back();
    const std::size_t n = job.rows.size();
    double sum = 0.0;
    double sumsq = 0.0;
    for (auto r : job.rows) {
      sum += y[r];
      sumsq += y[r] * y[r];
    }
    auto& node = tree.nodes[static_cast<std::size_t>(job.node)];
    node.value = sum / static_cast<double>(n);
    node.n_samples = n;
    if (n < min_samples_split || n < 2 * min_samples_leaf) continue;
    const double parent_score = sum * sum / static_cast<double>(n);
    if (sumsq - parent_score <= 1e-12 * (std::abs(sumsq) + 1.0)) continue;  // pure node

    Split best;
    best.score = parent_score;
    order = job.rows;
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
      double left_sum = 0.0;
      for (std::size_t i = 1; i < n; ++i) {
        left_sum += y[order[i - 1]];
        if (i < min_samples_leaf || n - i < min_samples_leaf) continue;
        const double lo = x(order[i - 1], f);
        const double hi = x(order[i], f);
        if (!(lo < hi)) continue;
        const double right_sum = sum - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(i) +
                             right_sum * right_sum / static_cast<double>(n - i);
        if (score > best.score + 1e-12 * std::abs(best.score)) {
          double thr = 0.5 * (lo + hi);
          if (thr >= hi) thr = lo;
          best = {static_cast<int>(f), thr, i, score};
        }
      }
    }
    if (best.feature < 0) continue;

    std::vector<std::size_t> left_rows;
    std::vector<std::size_t> right_rows;
    for (auto r : job.rows) (x(r, best.feature) <= best.threshold ? left_rows : right_rows).push_back(r);

    const int left_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& parent = tree.nodes[static_cast<std::size_t>(job.node)];
    parent.feature = best.feature;
    parent.threshold = best.threshold;
    parent.left = left_id;
    parent.right = left_id + 1;
    stack.push_back({left_id + 1, std::move(right_rows)});
    stack.push_back({left_id, std::move(left_rows)});
  }
  return tree;
}

Eigen::MatrixXd RandomForest::tree_predictions(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim)
    throw std::invalid_argument("RandomForest: feature width does not match training");
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(trees.size()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (std::size_t t = 0; t < trees.size(); ++t) out(i, static_cast<Eigen::Index>(t)) = trees[t].predict(x.row(i));
  return out;
}

RandomForest forest_fit(const ForestHyper& hyper, const Eigen::MatrixXd& x, std::span<const double> y,
                        std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n == 0) throw std::invalid_argument("forest_fit: empty training set");
  if (y.size() != n) throw std::invalid_argument("forest_fit: feature/label length mismatch");
  if (hyper.n_estimators == 0) throw std::invalid_argument("forest_fit: n_estimators must be positive");

  const std::size_t min_leaf = hyper.min_samples_leaf.resolve(n);
  std::size_t min_split = hyper.min_samples_split.resolve(n);
  if (min_split < 2) {
    log::info("min_samples_split below 2 raised to 2");
    min_split = 2;
  }

  RandomForest forest;
  forest.input_dim = static_cast<std::size_t>(x.cols());
  forest.trees.reserve(hyper.n_estimators);
  std::vector<std::size_t> rows(n);
  for (std::size_t t = 0; t < hyper.n_estimators; ++t) {
    CounterRng rng(derive_seed(seed, "tree", t));
    for (auto& r : rows) r = rng.below(n);
    forest.trees.push_back(fit_tree(x, y, rows, min_leaf, min_split));
  }
  return forest;
}

void to_json(nlohmann::json& j, const ForestHyper& h) {
  j = {{"n_estimators", h.n_estimators},
       {"min_samples_leaf", h.min_samples_leaf.value},
       {"min_samples_split", h.min_samples_split.value}};
}

void from_json(const nlohmann::json& j, ForestHyper& h) {
  ForestHyper d;
  h.n_estimators = j.value("n_estimators", d.n_estimators);
  h.min_samples_leaf.value = j.value("min_samples_leaf", d.min_samples_leaf.value);
  h.min_samples_split.value = j.value("min_samples_split", d.min_samples_split.value);
}

void to_json(nlohmann::json& j, const RandomForest& f) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : f.trees) {
    nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                   left = nlohmann::json::array(), right = nlohmann::json::array(),
                   value = nlohmann::json::array(), count = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
      count.push_back(n.n_samples);
    }
    trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
                     {"value", value}, {"n_samples", count}});
  }
  j = {{"input_dim", f.input_dim}, {"trees", std::move(trees)}};
}

void from_json(const nlohmann::json& j, RandomForest& f) {
  f.input_dim = j.at("input_dim").get<std::size_t>();
  f.trees.clear();
  for (const auto& t : j.at("trees")) {
    RegressionTree tree;
    const auto& feature = t.at("feature");
    tree.nodes.resize(feature.size());
    for (std::size_t k = 0; k < feature.size(); ++k) {
      auto& n = tree.nodes[k];
      n.feature = feature.at(k).get<int>();
      n.threshold = t.at("threshold").at(k).get<double>();
      n.left = t.at("left").at(k).get<int>();
      n.right = t.at("right").at(k).get<int>();
      n.value = t.at("value").at(k).get<double>();
      n.n_samples = t.at("n_samples").at(k).get<std::size_t>();
    }
    f.trees.push_back(std::move(tree));
  }
}

}  // namespace censura
