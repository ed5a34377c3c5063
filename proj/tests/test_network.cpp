#include <cmath>
#include <vector>

#include "doctest.h"

#include "censura/network.hpp"
#include "censura/network_io.hpp"
#include "censura/numerics.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"

using namespace censura;

namespace {

NetworkSpec small_spec(HeadKind head, bool variational = false, double dropout = 0.0) {
  NetworkSpec s;
  s.input_dim = 3;
  s.hidden_layers = 2;
  s.hidden_dim = 8;
  s.head = head;
  s.variational = variational;
  s.dropout_rate = dropout;
  return s;
}

LossSpec loss_of(LossKind k) {
  LossSpec l;
  l.kind = k;
  return l;
}

Eigen::MatrixXd random_batch(std::uint64_t seed, int rows, int cols) {
  CounterRng rng(seed);
  Eigen::MatrixXd x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2.0, 2.0);
  return x;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("layer widths") {
    NetworkSpec s;
    s.hidden_layers = 4;
    s.hidden_dim = 64;
    CHECK(s.hidden_widths() == std::vector<int>{64, 64, 64, 64});
    s.decreasing_dim = true;
    CHECK(s.hidden_widths() == std::vector<int>{64, 32, 16, 8});
    s.hidden_dim = 2;
    CHECK(s.hidden_widths() == std::vector<int>{2, 1, 1, 1});
    CHECK(head_width(HeadKind::scalar) == 1);
    CHECK(head_width(HeadKind::gaussian) == 2);
    CHECK(head_width(HeadKind::evidential) == 4);
  }

  TEST_CASE("parameter count matches the state") {
    for (bool variational : {false, true}) {
      auto s = small_spec(HeadKind::evidential, variational);
      s.decreasing_dim = true;
      const auto st = init_state(s, 3);
      CHECK(st.size() == s.parameter_count());
      CHECK(st.variational() == variational);
      CHECK(st.layers.size() == 3);
    }
  }

  TEST_CASE("initial weights lie within the fan-in bound") {
    auto s = small_spec(HeadKind::scalar, true);
    const auto st = init_state(s, 5, -5.0);
    for (const auto& layer : st.layers) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
      CHECK(layer.weight.cwiseAbs().maxCoeff() <= bound);
      CHECK(layer.bias.cwiseAbs().maxCoeff() <= bound);
      CHECK((layer.weight_rho.array() == -5.0).all());
    }
    CHECK(init_state(s, 5) == init_state(s, 5));
    CHECK(!(init_state(s, 5) == init_state(s, 6)));
  }

  TEST_CASE("zero parameters give zero output") {
    const auto s = small_spec(HeadKind::scalar);
    auto st = init_state(s, 1);
    st *= 0.0;
    CounterRng rng(0);
    const auto out = forward(st, s, random_batch(1, 7, 3), Mode::eval, rng);
    CHECK(out.rows() == 7);
    CHECK(out.cols() == 1);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("shape mismatch is rejected") {
    const auto s = small_spec(HeadKind::scalar);
    const auto st = init_state(s, 1);
    CounterRng rng(0);
    CHECK_THROWS_AS(forward(st, s, random_batch(1, 2, 4), Mode::eval, rng), std::invalid_argument);
  }

  TEST_CASE("eval mode ignores dropout") {
    const auto with = small_spec(HeadKind::gaussian, false, 0.5);
    const auto without = small_spec(HeadKind::gaussian, false, 0.0);
    const auto st = init_state(with, 9);
    const auto x = random_batch(2, 11, 3);
    CounterRng a(1), b(2);
    const auto o1 = forward(st, with, x, Mode::eval, a);
    const auto o2 = forward(st, without, x, Mode::eval, b);
    CHECK(o1 == o2);
    CHECK(a.counter() == 0);
    CounterRng c(1);
    CHECK(!(forward(st, with, x, Mode::train, c) == o1));
  }

  TEST_CASE("gaussian head floors the variance") {
    auto s = small_spec(HeadKind::gaussian);
    auto st = init_state(s, 1);
    st *= 0.0;
    st.layers.back().bias(1) = -100.0;
    st.layers.back().bias(0) = 2.5;
    CounterRng rng(0);
    const auto out = forward(st, s, random_batch(1, 3, 3), Mode::eval, rng);
    for (Eigen::Index i = 0; i < 3; ++i) {
      CHECK(out(i, 0) == 2.5);
      CHECK(out(i, 1) == kVarianceFloor);
    }
  }

  TEST_CASE("evidential head respects its constraints") {
    const auto s = small_spec(HeadKind::evidential);
    const auto st = init_state(s, 4);
    CounterRng rng(0);
    const auto out = forward(st, s, random_batch(3, 50, 3) * 10.0, Mode::eval, rng);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      CHECK(out(i, 1) > 0.0);
      CHECK(out(i, 2) > 1.0);
      CHECK(out(i, 3) > 0.0);
    }
  }

  TEST_CASE("variational forward with vanishing std equals the mean network") {
    auto vs = small_spec(HeadKind::scalar, true);
    auto ds = small_spec(HeadKind::scalar, false);
    const auto vstate = init_state(vs, 12, -60.0);
    NetworkState dstate;
    for (const auto& l : vstate.layers) dstate.layers.push_back({l.weight, l.bias, {}, {}});
    const auto x = random_batch(4, 20, 3);
    CounterRng r1(3), r2(3);
    const auto sampled = forward(vstate, vs, x, Mode::mc_dropout, r1);
    const auto plain = forward(dstate, ds, x, Mode::eval, r2);
    CHECK((sampled - plain).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("forward is deterministic for a fixed noise seed") {
    const auto s = small_spec(HeadKind::gaussian, true, 0.25);
    const auto st = init_state(s, 2);
    const auto x = random_batch(5, 9, 3);
    CounterRng a(44), b(44);
    CHECK(forward(st, s, x, Mode::mc_dropout, a) == forward(st, s, x, Mode::mc_dropout, b));
  }

  TEST_CASE("backward requires a recorded tape") {
    const auto s = small_spec(HeadKind::scalar);
    const auto st = init_state(s, 1);
    ForwardTape tape;
    CHECK_THROWS_AS(backward(st, s, tape, Eigen::MatrixXd::Zero(2, 1)), std::logic_error);
  }

  TEST_CASE("backward is linear in the output gradient") {
    const auto s = small_spec(HeadKind::gaussian, false, 0.25);
    const auto st = init_state(s, 8);
    const auto x = random_batch(6, 5, 3);
    CounterRng rng(1);
    ForwardTape tape;
    forward(st, s, x, Mode::train, rng, &tape);
    const Eigen::MatrixXd g = random_batch(7, 5, 2);
    const auto zero = backward(st, s, tape, Eigen::MatrixXd::Zero(5, 2));
    for (auto t : zero.tensors())
      for (double v : t) CHECK(v == 0.0);
    auto once = backward(st, s, tape, g);
    const auto twice = backward(st, s, tape, 2.0 * g);
    once *= 2.0;
    const auto a = once.tensors();
    const auto b = twice.tensors();
    for (std::size_t t = 0; t < a.size(); ++t)
      for (std::size_t i = 0; i < a[t].size(); ++i) CHECK(testing::close_rel(a[t][i], b[t][i], 1e-14, 1e-300));
  }

  TEST_CASE("end-to-end gradients match finite differences for every head and loss") {
    struct Case {
      NetworkSpec spec;
      LossSpec loss;
    };
    LossSpec bbb;
    bbb.kind = LossKind::bbb;
    bbb.kl_weight = 0.05;
    const std::vector<Case> cases{
        {small_spec(HeadKind::scalar, false, 0.25), loss_of(LossKind::censored_mse)},
        {small_spec(HeadKind::gaussian), loss_of(LossKind::censored_nll)},
        {small_spec(HeadKind::evidential), loss_of(LossKind::evidential)},
        {small_spec(HeadKind::scalar, true), bbb},
    };
    for (const auto& c : cases) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto r = testing::check_network_gradients(c.spec, c.loss, seed);
        INFO("loss " << to_string(c.loss.kind) << " seed " << seed);
        CHECK(r.n_params == c.spec.parameter_count());
        CHECK(r.max_rel_error < 1e-4);
      }
    }
  }

  TEST_CASE("adam first step moves by the learning rate against the gradient sign") {
    const auto s = small_spec(HeadKind::scalar);
    auto params = init_state(s, 1);
    const auto before = params;
    auto grads = params.zeros_like();
    CounterRng rng(3);
    for (auto t : grads.tensors())
      for (double& v : t) v = rng.normal();
    auto opt = make_adam_state(params);
    AdamConfig cfg;
    cfg.learning_rate = 0.01;
    adam_step(params, grads, opt, cfg);
    CHECK(opt.step == 1);
    const auto p = params.tensors();
    const auto b = before.tensors();
    const auto g = grads.tensors();
    for (std::size_t t = 0; t < p.size(); ++t)
      for (std::size_t i = 0; i < p[t].size(); ++i) {
        const double expected = -0.01 * (g[t][i] > 0 ? 1.0 : -1.0);
        CHECK(std::abs((p[t][i] - b[t][i]) - expected) < 1e-6 + 1e-10 / std::abs(g[t][i]));
      }
  }

  TEST_CASE("adam leaves parameters alone with zero gradient and no decay") {
    const auto s = small_spec(HeadKind::scalar);
    auto params = init_state(s, 1);
    const auto before = params;
    auto opt = make_adam_state(params);
    for (int i = 0; i < 3; ++i) adam_step(params, params.zeros_like(), opt, AdamConfig{});
    CHECK(params == before);
  }

  TEST_CASE("adam treats parameters independently") {
    NetworkState p;
    p.layers.push_back({Eigen::MatrixXd::Constant(1, 2, 0.3), Eigen::VectorXd::Zero(1), {}, {}});
    auto g = p.zeros_like();
    g.layers[0].weight << 0.7, 0.7;
    auto opt = make_adam_state(p);
    for (int i = 0; i < 5; ++i) adam_step(p, g, opt, AdamConfig{});
    CHECK(p.layers[0].weight(0, 0) == p.layers[0].weight(0, 1));
  }

  TEST_CASE("weight decay forms") {
    NetworkState p;
    p.layers.push_back({Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Zero(1), {}, {}});
    AdamConfig coupled;
    coupled.learning_rate = 0.1;
    coupled.weight_decay = 0.5;
    auto a = p;
    auto opt_a = make_adam_state(a);
    adam_step(a, a.zeros_like(), opt_a, coupled);
    // The decay term acts as a gradient, so Adam normalises it to one lr step.
    CHECK(a.layers[0].weight(0, 0) == doctest::Approx(1.9).epsilon(1e-6));

    AdamConfig decoupled = coupled;
    decoupled.decoupled_weight_decay = true;
    auto b = p;
    auto opt_b = make_adam_state(b);
    adam_step(b, b.zeros_like(), opt_b, decoupled);
    CHECK(b.layers[0].weight(0, 0) == doctest::Approx(2.0 * (1 - 0.05)).epsilon(1e-12));
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    const auto dir = testing::scratch_dir("checkpoint");
    Checkpoint c;
    c.spec = small_spec(HeadKind::gaussian, true, 0.25);
    c.state = init_state(c.spec, 99);
    c.config.learning_rate = 5e-4;
    c.loss.kind = LossKind::bbb;
    c.loss.kl_weight = 0.125;
    c.seed = 0xfeedfacecafebeefULL;
    save_checkpoint(dir / "c.json", c);
    const auto back = load_checkpoint(dir / "c.json");
    CHECK(back == c);
    save_checkpoint(dir / "d.json", back);
    CHECK(testing::read_text(dir / "c.json") == testing::read_text(dir / "d.json"));
  }
}
