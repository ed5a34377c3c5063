#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "censura/error.hpp"
#include "censura/network_io.hpp"
#include "censura/training.hpp"
#include "helpers.hpp"

using namespace censura;

namespace {

CensoredDataset line_dataset(std::size_t n, std::uint64_t seed, double slope = 2.0) {
  CounterRng rng(seed);
  std::vector<double> y(n);
  std::vector<int> m(n, 0);
  auto ds = testing::toy_dataset(y, m);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    x(static_cast<Eigen::Index>(i), 0) = rng.uniform(-1.0, 1.0);
    y[i] = slope * x(static_cast<Eigen::Index>(i), 0) + 1.0;
  }
  return CensoredDataset(x, y, std::vector<Censoring>(n, Censoring::observed),
                         std::vector<Date>(ds.dates().begin(), ds.dates().end()),
                         std::vector<std::string>(ds.ids().begin(), ds.ids().end()));
}

NetworkSpec scalar_spec(int dim = 16) {
  NetworkSpec s;
  s.input_dim = 1;
  s.hidden_layers = 2;
  s.hidden_dim = dim;
  return s;
}

LossSpec loss_of(LossKind k) {
  LossSpec l;
  l.kind = k;
  return l;
}

TrainConfig quick_config(int epochs) {
  TrainConfig c;
  c.learning_rate = 1e-2;
  c.max_epochs = epochs;
  c.batch_size = 32;
  c.weight_decay = 0.0;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("loss names round trip") {
    for (auto k : {LossKind::censored_mse, LossKind::censored_nll, LossKind::evidential, LossKind::bbb})
      CHECK(loss_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(loss_from_string("hinge"), std::invalid_argument);
  }

  TEST_CASE("incompatible head and loss are rejected") {
    auto s = scalar_spec();
    CHECK_THROWS_AS(check_compatible(s, loss_of(LossKind::censored_nll)), std::invalid_argument);
    CHECK_THROWS_AS(check_compatible(s, loss_of(LossKind::bbb)), std::invalid_argument);
    s.variational = true;
    CHECK_NOTHROW(check_compatible(s, loss_of(LossKind::bbb)));
    s.head = HeadKind::evidential;
    s.variational = false;
    CHECK_NOTHROW(check_compatible(s, loss_of(LossKind::evidential)));
  }

  TEST_CASE("noise-free linear data is fit to high accuracy") {
    const auto train = line_dataset(256, 1);
    const auto val = line_dataset(64, 2);
    const auto r = fit(scalar_spec(), quick_config(500), loss_of(LossKind::censored_mse), train, val);
    CHECK(r.log.best_validation_loss < 1e-3);
    CHECK(dataset_loss(r.state, scalar_spec(), loss_of(LossKind::censored_mse), val, 0.0) ==
          doctest::Approx(r.log.best_validation_loss).epsilon(1e-12));
  }

  TEST_CASE("constant labels give a near-constant predictor") {
    const auto train = line_dataset(128, 3, 0.0);
    const auto val = line_dataset(32, 4, 0.0);
    const auto r = fit(scalar_spec(8), quick_config(200), loss_of(LossKind::censored_mse), train, val);
    CHECK(r.log.best_validation_loss < 1e-4);
  }

  TEST_CASE("fit is deterministic for a fixed seed") {
    const auto train = testing::random_dataset(100, 2, 5, 0.3, 0.1);
    const auto val = testing::random_dataset(40, 2, 6, 0.3, 0.1);
    NetworkSpec s = scalar_spec(8);
    s.input_dim = 2;
    s.head = HeadKind::gaussian;
    s.dropout_rate = 0.25;
    const auto cfg = quick_config(20);
    const auto a = fit(s, cfg, loss_of(LossKind::censored_nll), train, val);
    const auto b = fit(s, cfg, loss_of(LossKind::censored_nll), train, val);
    CHECK(a.log == b.log);
    CHECK(a.state == b.state);
    nlohmann::json ja = a.log, jb = b.log;
    CHECK(ja.dump() == jb.dump());
    auto other = cfg;
    other.seed = 4;
    CHECK(!(fit(s, other, loss_of(LossKind::censored_nll), train, val).state == a.state));
  }

  TEST_CASE("the returned state is the best visited one") {
    const auto train = testing::random_dataset(80, 2, 7);
    const auto val = testing::random_dataset(30, 2, 8);
    NetworkSpec s = scalar_spec(16);
    s.input_dim = 2;
    auto cfg = quick_config(60);
    cfg.learning_rate = 5e-2;
    cfg.early_stop_patience = 10;
    const auto r = fit(s, cfg, loss_of(LossKind::censored_mse), train, val);
    double min_seen = std::numeric_limits<double>::infinity();
    for (const auto& e : r.log.epochs) min_seen = std::min(min_seen, e.validation_loss);
    CHECK(r.log.best_validation_loss == min_seen);
    CHECK(dataset_loss(r.state, s, loss_of(LossKind::censored_mse), val, 0.0) ==
          doctest::Approx(min_seen).epsilon(1e-12));
    if (r.log.stopped_early) CHECK(static_cast<int>(r.log.epochs.size()) < cfg.max_epochs);
  }

  TEST_CASE("plateau scheduler lowers the learning rate") {
    const auto train = line_dataset(64, 9, 0.0);
    auto cfg = quick_config(40);
    cfg.scheduler_patience = 2;
    cfg.early_stop_patience = 1000;
    const auto r = fit(scalar_spec(8), cfg, loss_of(LossKind::censored_mse), train, line_dataset(16, 10, 0.0));
    CHECK(r.log.epochs.front().learning_rate == cfg.learning_rate);
    CHECK(r.log.epochs.back().learning_rate < cfg.learning_rate);
    for (std::size_t i = 1; i < r.log.epochs.size(); ++i)
      CHECK(r.log.epochs[i].learning_rate <= r.log.epochs[i - 1].learning_rate);
  }

  TEST_CASE("every loss family trains without error") {
    const auto train = testing::random_dataset(120, 2, 11, 0.3, 0.1);
    const auto val = testing::random_dataset(40, 2, 12, 0.3, 0.1);
    struct Case {
      HeadKind head;
      bool variational;
      LossKind loss;
    };
    for (const auto& c : {Case{HeadKind::scalar, false, LossKind::censored_mse},
                          Case{HeadKind::gaussian, false, LossKind::censored_nll},
                          Case{HeadKind::evidential, false, LossKind::evidential},
                          Case{HeadKind::scalar, true, LossKind::bbb}}) {
      NetworkSpec s = scalar_spec(8);
      s.input_dim = 2;
      s.head = c.head;
      s.variational = c.variational;
      const auto& tr = c.loss == LossKind::evidential ? observed_subset(train) : train;
      const auto& va = c.loss == LossKind::evidential ? observed_subset(val) : val;
      const auto r = fit(s, quick_config(15), loss_of(c.loss), tr, va);
      CHECK(r.state.all_finite());
      CHECK(r.log.epochs.size() == 15);
      CHECK(r.log.epochs.back().train_loss < r.log.epochs.front().train_loss * 2.0);
    }
  }

  TEST_CASE("the default kl weight spreads the KL over the training points") {
    const auto train = testing::random_dataset(100, 2, 21, 0.2);
    NetworkSpec s = scalar_spec(8);
    s.input_dim = 2;
    s.variational = true;
    LossSpec implicit = loss_of(LossKind::bbb);
    LossSpec per_point = implicit;
    per_point.kl_weight = 1.0 / 100.0;
    LossSpec per_batch = implicit;
    per_batch.kl_weight = 1.0 / 4.0;
    const auto a = fit(s, quick_config(5), implicit, train, train);
    CHECK(a.state == fit(s, quick_config(5), per_point, train, train).state);
    CHECK_FALSE(a.state == fit(s, quick_config(5), per_batch, train, train).state);
  }

  TEST_CASE("divergence raises a numeric error") {
    const auto train = line_dataset(64, 13, 1e6);
    auto cfg = quick_config(50);
    cfg.learning_rate = 1e200;
    CHECK_THROWS_AS(fit(scalar_spec(8), cfg, loss_of(LossKind::censored_mse), train, train), NumericError);
    CHECK_THROWS_AS(fit(scalar_spec(8), cfg, loss_of(LossKind::censored_mse), CensoredDataset{}, train),
                    std::invalid_argument);
  }

  TEST_CASE("one-point grid returns that point") {
    HyperGrid g;
    g.learning_rates = {1e-3};
    g.scheduler_factors = {0.1};
    g.hidden_layers = {3};
    g.hidden_dims = {8};
    g.decreasing_dims = {true};
    g.dropout_rates = {0.25};
    CHECK(g.size() == 1);
    const auto train = line_dataset(64, 14);
    const auto r = grid_search(g, scalar_spec(), quick_config(500), loss_of(LossKind::censored_mse), train, train, 3);
    CHECK(r.spec.hidden_layers == 3);
    CHECK(r.spec.hidden_dim == 8);
    CHECK(r.spec.decreasing_dim);
    CHECK(r.spec.dropout_rate == 0.25);
    CHECK(r.config.learning_rate == 1e-3);
    CHECK(r.config.scheduler_factor == 0.1);
    CHECK(r.config.max_epochs == 500);
    REQUIRE(r.entries.size() == 1);
    CHECK(r.entries[0].config.max_epochs == 3);
  }

  TEST_CASE("grid search picks the lowest loss and breaks ties by size then learning rate") {
    HyperGrid g;
    g.learning_rates = {1e-3, 5e-4};
    g.scheduler_factors = {0.5};
    g.hidden_layers = {2};
    g.hidden_dims = {16, 8};
    g.decreasing_dims = {false};
    g.dropout_rates = {0.25};
    const auto train = line_dataset(64, 15);
    // Validation rows censored far above any prediction score exactly zero
    // for every configuration, forcing a tie.
    std::vector<double> high(16, 1e6);
    const auto tie_val = testing::toy_dataset(high, std::vector<int>(16, -1));
    const auto r = grid_search(g, scalar_spec(), quick_config(10), loss_of(LossKind::censored_mse), train, tie_val, 2);
    CHECK(r.validation_loss == 0.0);
    CHECK(r.spec.hidden_dim == 8);
    CHECK(r.config.learning_rate == 5e-4);

    const auto val = line_dataset(32, 16);
    const auto best = grid_search(g, scalar_spec(), quick_config(10), loss_of(LossKind::censored_mse), train, val, 20);
    for (const auto& e : best.entries) CHECK(best.validation_loss <= e.validation_loss);
  }

  TEST_CASE("grid search fails when every point diverges") {
    HyperGrid g;
    g.learning_rates = {1e200};
    g.scheduler_factors = {0.5};
    g.hidden_layers = {2};
    g.hidden_dims = {8};
    g.decreasing_dims = {false};
    g.dropout_rates = {0.25};
    const auto train = line_dataset(64, 17, 1e6);
    CHECK_THROWS_AS(grid_search(g, scalar_spec(), quick_config(10), loss_of(LossKind::censored_mse), train, train, 20),
                    SearchError);
  }
}
