#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "censura/forest.hpp"
#include "censura/random.hpp"

using namespace censura;

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

}  // namespace

TEST_SUITE("forest") {
  TEST_CASE("sample counts resolve fractions against the training size") {
    CHECK(SampleCount{2.0}.resolve(100) == 2);
    CHECK(SampleCount{0.25}.resolve(100) == 25);
    CHECK(SampleCount{0.25}.resolve(10) == 3);
    CHECK(SampleCount{0.5}.resolve(1) == 1);
    CHECK(SampleCount{250.0}.resolve(10) == 250);
  }

  TEST_CASE("four points split into their two obvious groups") {
    Eigen::MatrixXd x(4, 1);
    x << 0, 1, 2, 3;
    const std::vector<double> y{1, 1, 5, 5};
    const auto rows = all_rows(4);
    const auto t = fit_tree(x, y, rows, 1, 2);
    REQUIRE(t.nodes.size() == 3);
    CHECK(t.nodes[0].feature == 0);
    CHECK(t.nodes[0].threshold == 1.5);
    CHECK(t.leaf_count() == 2);
    Eigen::RowVectorXd q(1);
    for (double v : {-10.0, 0.0, 1.0, 1.5}) {
      q(0) = v;
      CHECK(t.predict(q) == 1.0);
    }
    for (double v : {1.51, 2.0, 99.0}) {
      q(0) = v;
      CHECK(t.predict(q) == 5.0);
    }
  }

  TEST_CASE("a tree picks the informative feature") {
    CounterRng rng(1);
    Eigen::MatrixXd x(200, 3);
    std::vector<double> y(200);
    for (int i = 0; i < 200; ++i) {
      for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform();
      y[static_cast<std::size_t>(i)] = x(i, 2) > 0.4 ? 3.0 : -1.0;
    }
    const auto t = fit_tree(x, y, all_rows(200), 1, 2);
    CHECK(t.nodes[0].feature == 2);
    CHECK(t.leaf_count() == 2);
  }

  TEST_CASE("constant labels give a single leaf") {
    Eigen::MatrixXd x(10, 2);
    x.setRandom();
    const std::vector<double> y(10, 4.25);
    const auto t = fit_tree(x, y, all_rows(10), 1, 2);
    CHECK(t.nodes.size() == 1);
    CHECK(t.nodes[0].value == 4.25);
    CHECK(t.nodes[0].n_samples == 10);
  }

  TEST_CASE("minimum leaf size is honoured") {
    CounterRng rng(2);
    Eigen::MatrixXd x(300, 2);
    std::vector<double> y(300);
    for (int i = 0; i < 300; ++i) {
      x(i, 0) = rng.uniform();
      x(i, 1) = rng.uniform();
      y[static_cast<std::size_t>(i)] = std::sin(6 * x(i, 0)) + rng.normal() * 0.1;
    }
    for (std::size_t leaf : {1u, 5u, 40u}) {
      const auto t = fit_tree(x, y, all_rows(300), leaf, 2);
      for (const auto& n : t.nodes)
        if (n.feature < 0) CHECK(n.n_samples >= leaf);
    }
    const auto stump = fit_tree(x, y, all_rows(300), 1, 301);
    CHECK(stump.nodes.size() == 1);
  }

  TEST_CASE("leaf values are means of their rows") {
    Eigen::MatrixXd x(6, 1);
    x << 0, 0, 0, 10, 10, 10;
    const std::vector<double> y{1, 2, 3, 7, 8, 12};
    const auto t = fit_tree(x, y, all_rows(6), 1, 2);
    Eigen::RowVectorXd q(1);
    q(0) = 0;
    CHECK(t.predict(q) == doctest::Approx(2.0));
    q(0) = 10;
    CHECK(t.predict(q) == doctest::Approx(9.0));
    // Repeated rows act as weights.
    const std::vector<std::size_t> rows{0, 0, 0, 2, 3, 4};
    const auto w = fit_tree(x, y, rows, 1, 2);
    q(0) = 0;
    CHECK(w.predict(q) == doctest::Approx(1.5));
  }

  TEST_CASE("forest size, determinism and bootstrap diversity") {
    CounterRng rng(3);
    Eigen::MatrixXd x(120, 2);
    std::vector<double> y(120);
    for (int i = 0; i < 120; ++i) {
      x(i, 0) = rng.uniform(-1, 1);
      x(i, 1) = rng.uniform(-1, 1);
      y[static_cast<std::size_t>(i)] = x(i, 0) * 2 + rng.normal() * 0.3;
    }
    ForestHyper h;
    h.n_estimators = 25;
    const auto f = forest_fit(h, x, y, 11);
    CHECK(f.trees.size() == 25);
    CHECK(f.input_dim == 2);
    CHECK(f == forest_fit(h, x, y, 11));
    CHECK(!(f == forest_fit(h, x, y, 12)));
    const auto preds = f.tree_predictions(x);
    CHECK(preds.rows() == 120);
    CHECK(preds.cols() == 25);
    double spread = 0.0;
    for (Eigen::Index i = 0; i < preds.rows(); ++i) spread += preds.row(i).maxCoeff() - preds.row(i).minCoeff();
    CHECK(spread > 0.0);
    for (const auto& t : f.trees) CHECK(t.nodes[0].n_samples == 120);
  }

  TEST_CASE("split size of one is raised to two") {
    Eigen::MatrixXd x(4, 1);
    x << 0, 1, 2, 3;
    const std::vector<double> y{0, 1, 2, 3};
    ForestHyper h;
    h.n_estimators = 3;
    h.min_samples_leaf = SampleCount{1.0};
    h.min_samples_split = SampleCount{1.0};
    const auto f = forest_fit(h, x, y, 0);
    CHECK(f.trees.size() == 3);
  }

  TEST_CASE("forest json round trip") {
    Eigen::MatrixXd x(30, 1);
    std::vector<double> y(30);
    for (int i = 0; i < 30; ++i) {
      x(i, 0) = i * 0.1;
      y[static_cast<std::size_t>(i)] = std::cos(i * 0.3);
    }
    ForestHyper h;
    h.n_estimators = 4;
    h.min_samples_leaf = SampleCount{0.1};
    const auto f = forest_fit(h, x, y, 5);
    nlohmann::json j = f;
    const auto back = j.get<RandomForest>();
    CHECK(back == f);
    nlohmann::json jh = h;
    CHECK(jh.get<ForestHyper>() == h);
  }
}
