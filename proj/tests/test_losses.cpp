#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "censura/losses.hpp"
#include "censura/random.hpp"
#include "helpers.hpp"

using namespace censura;
using censura::testing::close_rel;

namespace {

struct Batch {
  std::vector<double> labels;
  std::vector<Censoring> masks;
  BatchTargets targets() const { return {labels, masks}; }
};

Batch batch(std::vector<double> y, std::vector<int> m) {
  Batch b{std::move(y), {}};
  for (int v : m) b.masks.push_back(censoring_from_int(v));
  return b;
}

bool fd_close(double analytic, double numeric) { return close_rel(analytic, numeric, 1e-4, 1e-7); }

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("one-sided error examples") {
    CHECK(censored_error(4.2, 5.0, Censoring::observed) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(censored_error(5.0, 6.0, Censoring::left) == 0.0);
    CHECK(censored_error(7.0, 6.0, Censoring::left) == -1.0);
    CHECK(censored_error(3.0, 4.0, Censoring::right) == 1.0);
    CHECK(censored_error(5.0, 4.0, Censoring::right) == 0.0);
  }

  TEST_CASE("censored mse examples") {
    const auto b = batch({6, 6}, {-1, -1});
    const std::vector<double> mu{5, 7};
    const auto r = censored_mse(mu, b.targets());
    CHECK(r.value == 0.5);
    CHECK(r.d_mean[0] == 0.0);
    CHECK(r.d_mean[1] == 1.0);

    const auto single = censored_mse(std::vector<double>{4.0}, batch({5}, {0}).targets());
    CHECK(single.value == 1.0);
    CHECK(single.d_mean[0] == -2.0);

    const auto zero = censored_mse(std::vector<double>{1, 2, 3}, batch({1, 5, 0}, {0, -1, 1}).targets());
    CHECK(zero.value == 0.0);
    for (double g : zero.d_mean) CHECK(g == 0.0);

    CHECK_THROWS_AS(censored_mse(std::vector<double>{}, batch({}, {}).targets()), std::invalid_argument);
    CHECK_THROWS_AS(censored_mse(std::vector<double>{1, 2}, batch({1}, {0}).targets()), std::invalid_argument);
  }

  TEST_CASE("invalid masks are rejected") {
    Batch b{{1.0}, {static_cast<Censoring>(3)}};
    CHECK_THROWS_AS(censored_mse(std::vector<double>{1.0}, b.targets()), std::invalid_argument);
    CHECK_THROWS_AS(censored_nll(std::vector<GaussianParams>{{0, 1}}, b.targets(), false), std::invalid_argument);
  }

  TEST_CASE("tobit examples") {
    const std::vector<GaussianParams> unit{{3.0, 1.0}};
    CHECK(censored_nll(unit, batch({3.0}, {-1}).targets(), false).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(censored_nll(unit, batch({3.0}, {0}).targets(), true).value ==
          doctest::Approx(0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-12));
    const std::vector<GaussianParams> p{{2.0, 4.0}};
    const double z = 2.0 - 1.96 * 2.0;
    const double expected = -std::log(0.9750021048517795);
    CHECK(censored_nll(p, batch({z}, {1}).targets(), true).value == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.0253156).epsilon(1e-5));
    CHECK(censored_nll_term(p[0], z, Censoring::right) == doctest::Approx(expected).epsilon(1e-12));
    CHECK_THROWS_AS(censored_nll(std::vector<GaussianParams>{}, batch({}, {}).targets(), true), std::invalid_argument);
  }

  TEST_CASE("without censoring the losses reduce to their plain forms") {
    CounterRng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> mu, y;
      std::vector<GaussianParams> params;
      std::vector<int> m;
      for (int i = 0; i < 17; ++i) {
        mu.push_back(rng.normal());
        y.push_back(rng.normal() * 2.0);
        params.emplace_back(mu.back(), 0.1 + rng.uniform() * 3.0);
        m.push_back(0);
      }
      const auto b = batch(y, m);
      double mse = 0.0, nll = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        mse += (y[i] - mu[i]) * (y[i] - mu[i]);
        const double v = params[i].variance();
        nll += 0.5 * std::log(2 * std::numbers::pi * v) + (y[i] - mu[i]) * (y[i] - mu[i]) / (2 * v);
      }
      mse /= static_cast<double>(y.size());
      nll /= static_cast<double>(y.size());
      CHECK(close_rel(censored_mse(mu, b.targets()).value, mse, 1e-12));
      CHECK(close_rel(censored_nll(params, b.targets(), true).value, nll, 1e-12));
      CHECK(close_rel(censored_nll(params, b.targets(), false).value, nll - 0.5 * std::log(2 * std::numbers::pi), 1e-12));
    }
  }

  TEST_CASE("left-censored nll increases with the predicted mean") {
    for (double var : {0.01, 1.0, 25.0}) {
      double prev = -1.0;
      for (double mu = -30.0; mu <= 30.0; mu += 0.1) {
        const std::vector<GaussianParams> p{{mu, var}};
        const double v = censored_nll(p, batch({0.0}, {-1}).targets(), false).value;
        CHECK(v >= prev);
        prev = v;
      }
    }
  }

  TEST_CASE("mse gradient is zero for correctly sided censored points") {
    CounterRng rng(2);
    for (int i = 0; i < 100; ++i) {
      const double z = rng.normal();
      const double below = z - rng.uniform() * 3.0;
      const double above = z + rng.uniform() * 3.0;
      CHECK(censored_mse(std::vector<double>{below}, batch({z}, {-1}).targets()).d_mean[0] == 0.0);
      CHECK(censored_mse(std::vector<double>{above}, batch({z}, {1}).targets()).d_mean[0] == 0.0);
    }
  }

  TEST_CASE("tobit gradients match finite differences") {
    CounterRng rng(77);
    const double h = 1e-5;
    for (int i = 0; i < 100; ++i) {
      const double mu = rng.normal();
      const double var = 0.05 + rng.uniform() * 4.0;
      const double t = rng.uniform(-5.0, 5.0);
      const double z = mu + t * std::sqrt(var);
      const int mask = static_cast<int>(i % 3) - 1;
      const auto b = batch({z}, {mask});
      auto value = [&](double m, double v) {
        return censored_nll(std::vector<GaussianParams>{{m, v}}, b.targets(), false).value;
      };
      const auto r = censored_nll(std::vector<GaussianParams>{{mu, var}}, b.targets(), false);
      const double fd_m = (value(mu + h, var) - value(mu - h, var)) / (2 * h);
      const double fd_v = (value(mu, var + h) - value(mu, var - h)) / (2 * h);
      CHECK(fd_close(r.d_mean[0], fd_m));
      CHECK(fd_close(r.d_variance[0], fd_v));
    }
  }

  TEST_CASE("mse gradients match finite differences") {
    CounterRng rng(78);
    const double h = 1e-5;
    for (int i = 0; i < 100; ++i) {
      const double mu = rng.normal();
      const double z = mu + rng.uniform(-5.0, 5.0);
      const auto b = batch({z, 0.3}, {static_cast<int>(i % 3) - 1, 0});
      auto value = [&](double m) { return censored_mse(std::vector<double>{m, 0.0}, b.targets()).value; };
      const auto r = censored_mse(std::vector<double>{mu, 0.0}, b.targets());
      CHECK(fd_close(r.d_mean[0], (value(mu + h) - value(mu - h)) / (2 * h)));
    }
  }

  TEST_CASE("evidential loss at zero residual") {
    const std::vector<EvidentialOutput> out{{5.0, 1.0, 2.0, 1.0}};
    const double expected = 0.5 * std::log(std::numbers::pi) + std::lgamma(2.0) - std::lgamma(2.5) - 2.0 * std::log(4.0) +
                            2.5 * std::log(4.0);
    const auto r = evidential_loss(out, std::vector<double>{5.0}, 1.0);
    CHECK(r.value == doctest::Approx(expected).epsilon(1e-10));
    CHECK(r.value == doctest::Approx(0.980829).epsilon(1e-6));
    // Regulariser contributes nothing at zero residual.
    CHECK(evidential_loss(out, std::vector<double>{5.0}, 0.0).value == doctest::Approx(r.value).epsilon(1e-14));
    CHECK(r.d_gamma[0] == 0.0);
  }

  TEST_CASE("evidential loss rejects invalid parameters") {
    const std::vector<double> y{0.0};
    CHECK_THROWS_AS(evidential_loss(std::vector<EvidentialOutput>{{0, 1, 1.0, 1}}, y, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(evidential_loss(std::vector<EvidentialOutput>{{0, 0, 2, 1}}, y, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(evidential_loss(std::vector<EvidentialOutput>{{0, 1, 2, -1}}, y, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(evidential_loss(std::vector<EvidentialOutput>{{0, 1, 2, 1}}, y, -1.0), std::invalid_argument);
  }

  TEST_CASE("evidential gradients match finite differences") {
    CounterRng rng(5);
    const double h = 1e-5;
    for (int i = 0; i < 100; ++i) {
      EvidentialOutput o{rng.normal(), 0.2 + rng.uniform() * 3, 1.2 + rng.uniform() * 4, 0.2 + rng.uniform() * 3};
      const double y = o.gamma + rng.uniform(-5.0, 5.0);
      const std::vector<double> ys{y};
      auto value = [&](EvidentialOutput p) { return evidential_loss(std::vector<EvidentialOutput>{p}, ys, 1.0).value; };
      const auto r = evidential_loss(std::vector<EvidentialOutput>{o}, ys, 1.0);
      auto fd = [&](double EvidentialOutput::*field) {
        EvidentialOutput a = o, b = o;
        a.*field += h;
        b.*field -= h;
        return (value(a) - value(b)) / (2 * h);
      };
      CHECK(fd_close(r.d_gamma[0], fd(&EvidentialOutput::gamma)));
      CHECK(fd_close(r.d_nu[0], fd(&EvidentialOutput::nu)));
      CHECK(fd_close(r.d_alpha[0], fd(&EvidentialOutput::alpha)));
      CHECK(fd_close(r.d_beta[0], fd(&EvidentialOutput::beta)));
    }
  }

  TEST_CASE("evidential uncertainty decomposition") {
    const auto a = evidential_uncertainties({0.0, 2.0, 3.0, 2.0});
    CHECK(a.epistemic == 0.5);
    CHECK(a.aleatoric == 1.0);
    const auto b = evidential_uncertainties({0.0, 1.0, 2.0, 1.0});
    CHECK(b.epistemic == 1.0);
    CHECK(b.aleatoric == 1.0);
    CounterRng rng(8);
    for (int i = 0; i < 50; ++i) {
      const EvidentialOutput o{0.0, 0.1 + rng.uniform() * 5, 1.01 + rng.uniform() * 5, 0.1 + rng.uniform() * 5};
      const auto u = evidential_uncertainties(o);
      CHECK(close_rel(u.aleatoric, o.nu * u.epistemic, 1e-12));
    }
    CHECK_THROWS_AS(evidential_uncertainties({0.0, 1.0, 1.0, 1.0}), std::invalid_argument);
  }

  TEST_CASE("kl divergence examples and gradients") {
    CHECK(kl_diag_gaussians(std::vector<double>{0.0}, std::vector<double>{1.0}, 1.0).value == 0.0);
    CHECK(kl_diag_gaussians(std::vector<double>{1.0}, std::vector<double>{1.0}, 1.0).value == doctest::Approx(0.5));
    CHECK(kl_diag_gaussians(std::vector<double>{0.0}, std::vector<double>{2.0}, 1.0).value ==
          doctest::Approx(-std::log(2.0) + 1.5).epsilon(1e-14));
    CHECK_THROWS_AS(kl_diag_gaussians(std::vector<double>{0.0}, std::vector<double>{0.0}, 1.0), std::invalid_argument);

    CounterRng rng(9);
    const double h = 1e-6;
    for (int i = 0; i < 50; ++i) {
      const double m = rng.normal();
      const double s = 0.05 + rng.uniform();
      const double prior = 0.5 + rng.uniform();
      auto value = [&](double mm, double ss) {
        return kl_diag_gaussians(std::vector<double>{mm}, std::vector<double>{ss}, prior).value;
      };
      const auto r = kl_diag_gaussians(std::vector<double>{m}, std::vector<double>{s}, prior);
      CHECK(fd_close(r.d_mean[0], (value(m + h, s) - value(m - h, s)) / (2 * h)));
      CHECK(fd_close(r.d_std[0], (value(m, s + h) - value(m, s - h)) / (2 * h)));
      CHECK(r.value >= 0.0);
    }
  }

  TEST_CASE("variational objective") {
    CHECK(bbb_objective(1.0, 0.0, 0.3) == 1.0);
    CHECK(bbb_objective(0.0, 2.0, 0.5) == 1.0);
  }
}
