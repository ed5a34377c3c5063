#include "censura/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "censura/numerics.hpp"

namespace censura {

std::string_view to_string(HeadKind h) noexcept {
  switch (h) {
    case HeadKind::scalar: return "scalar";
    case HeadKind::gaussian: return "gaussian";
    case HeadKind::evidential: return "evidential";
  }
  return "scalar";
}

HeadKind head_from_string(std::string_view s) {
  if (s == "scalar") return HeadKind::scalar;
  if (s == "gaussian") return HeadKind::gaussian;
  if (s == "evidential") return HeadKind::evidential;
  throw std::invalid_argument("unknown head kind '" + std::string(s) + "'");
}

int head_width(HeadKind h) noexcept {
  switch (h) {
    case HeadKind::scalar: return 1;
    case HeadKind::gaussian: return 2;
    case HeadKind::evidential: return 4;
  }
  return 1;
}

std::vector<int> NetworkSpec::hidden_widths() const {
  std::vector<int> w;
  int width = hidden_dim;
  for (int k = 0; k < hidden_layers; ++k) {
    w.push_back(std::max(width, 1));
    if (decreasing_dim) width /= 2;
  }
  return w;
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0;
  int fan_in = input_dim;
  auto widths = hidden_widths();
  widths.push_back(output_width());
  for (int w : widths) {
    n += static_cast<std::size_t>(w) * static_cast<std::size_t>(fan_in + 1);
    fan_in = w;
  }
  return variational ? 2 * n : n;
}

void NetworkSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("NetworkSpec: input_dim must be positive");
  if (hidden_layers < 1) throw std::invalid_argument("NetworkSpec: hidden_layers must be positive");
  if (hidden_dim < 1) throw std::invalid_argument("NetworkSpec: hidden_dim must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("NetworkSpec: dropout_rate must lie in [0, 1)");
}

// ---------------------------------------------------------------------------

bool NetworkState::all_finite() const noexcept {
  for (auto t : tensors())
    for (double v : t)
      if (!std::isfinite(v)) return false;
  return true;
}

std::size_t NetworkState::size() const noexcept {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

namespace {

template <typename Layer, typename Span>
void collect(Layer& l, std::vector<Span>& out) {
  out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
  out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  if (l.weight_rho.size() > 0) {
    out.emplace_back(l.weight_rho.data(), static_cast<std::size_t>(l.weight_rho.size()));
    out.emplace_back(l.bias_rho.data(), static_cast<std::size_t>(l.bias_rho.size()));
  }
}

}  // namespace

std::vector<std::span<double>> NetworkState::tensors() {
  std::vector<std::span<double>> out;
  for (auto& l : layers) collect(l, out);
  return out;
}

std::vector<std::span<const double>> NetworkState::tensors() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers) collect(l, out);
  return out;
}

NetworkState NetworkState::zeros_like() const {
  NetworkState z;
  for (const auto& l : layers) {
    DenseLayer d;
    d.weight = Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols());
    d.bias = Eigen::VectorXd::Zero(l.bias.size());
    if (l.weight_rho.size() > 0) {
      d.weight_rho = Eigen::MatrixXd::Zero(l.weight_rho.rows(), l.weight_rho.cols());
      d.bias_rho = Eigen::VectorXd::Zero(l.bias_rho.size());
    }
    z.layers.push_back(std::move(d));
  }
  return z;
}

NetworkState& NetworkState::operator+=(const NetworkState& other) {
  auto a = tensors();
  auto b = other.tensors();
  if (a.size() != b.size()) throw std::invalid_argument("NetworkState: layout mismatch");
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].size() != b[t].size()) throw std::invalid_argument("NetworkState: layout mismatch");
    for (std::size_t i = 0; i < a[t].size(); ++i) a[t][i] += b[t][i];
  }
  return *this;
}

NetworkState& NetworkState::operator*=(double s) {
  for (auto t : tensors())
    for (double& v : t) v *= s;
  return *this;
}

NetworkState init_state(const NetworkSpec& spec, std::uint64_t seed, double rho_init) {
  spec.validate();
  CounterRng rng(derive_seed(seed, "init"));
  NetworkState state;
  int fan_in = spec.input_dim;
  auto widths = spec.hidden_widths();
  widths.push_back(spec.output_width());
  for (int w : widths) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer l;
    l.weight.resize(w, fan_in);
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i) l.weight(i, j) = rng.uniform(-bound, bound);
    l.bias.resize(w);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = rng.uniform(-bound, bound);
    if (spec.variational) {
      l.weight_rho = Eigen::MatrixXd::Constant(w, fan_in, rho_init);
      l.bias_rho = Eigen::VectorXd::Constant(w, rho_init);
    }
    state.layers.push_back(std::move(l));
    fan_in = w;
  }
  return state;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd apply_head(HeadKind head, const Eigen::MatrixXd& raw) {
  Eigen::MatrixXd out = raw;
  switch (head) {
    case HeadKind::scalar: break;
    case HeadKind::gaussian:
      for (Eigen::Index i = 0; i < raw.rows(); ++i) out(i, 1) = std::max(softplus(raw(i, 1)), kVarianceFloor);
      break;
    case HeadKind::evidential:
      for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        out(i, 1) = softplus(raw(i, 1));
        out(i, 2) = softplus(raw(i, 2)) + 1.0;
        out(i, 3) = softplus(raw(i, 3));
      }
      break;
  }
  return out;
}

// Gradient through the head transform. The variance floor is treated as a
// straight-through clamp, matching how frameworks clamp the variance of a
// Gaussian NLL without cutting the gradient.
Eigen::MatrixXd head_backward(HeadKind head, const Eigen::MatrixXd& raw, const Eigen::MatrixXd& grad) {
  Eigen::MatrixXd g = grad;
  switch (head) {
    case HeadKind::scalar: break;
    case HeadKind::gaussian:
      for (Eigen::Index i = 0; i < raw.rows(); ++i) g(i, 1) *= logistic(raw(i, 1));
      break;
    case HeadKind::evidential:
      for (Eigen::Index i = 0; i < raw.rows(); ++i)
        for (Eigen::Index k = 1; k < 4; ++k) g(i, k) *= logistic(raw(i, k));
      break;
  }
  return g;
}

}  // namespace

Eigen::MatrixXd forward(const NetworkState& state, const NetworkSpec& spec, const Eigen::MatrixXd& batch, Mode mode,
                        CounterRng& rng, ForwardTape* tape) {
  if (batch.cols() != spec.input_dim)
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                                std::to_string(spec.input_dim));
  const std::size_t n_layers = state.layers.size();
  if (n_layers != static_cast<std::size_t>(spec.hidden_layers) + 1)
    throw std::invalid_argument("forward: state does not match spec");

  const bool stochastic = mode != Mode::eval;
  const bool sample_weights = spec.variational && stochastic;
  const bool dropout = spec.dropout_rate > 0.0 && stochastic;
  const double keep = 1.0 - spec.dropout_rate;

  if (tape) {
    *tape = ForwardTape{};
    tape->input = batch;
  }

  Eigen::MatrixXd a = batch;
  Eigen::MatrixXd raw;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = state.layers[l];
    Eigen::MatrixXd w_sampled;
    Eigen::VectorXd b_sampled;
    const Eigen::MatrixXd* w = &layer.weight;
    const Eigen::VectorXd* b = &layer.bias;
    if (sample_weights) {
      Eigen::MatrixXd eps_w(layer.weight.rows(), layer.weight.cols());
      Eigen::VectorXd eps_b(layer.bias.size());
      for (Eigen::Index j = 0; j < eps_w.cols(); ++j)
        for (Eigen::Index i = 0; i < eps_w.rows(); ++i) eps_w(i, j) = rng.normal();
      for (Eigen::Index i = 0; i < eps_b.size(); ++i) eps_b(i) = rng.normal();
      w_sampled = layer.weight + layer.weight_rho.unaryExpr([](double r) { return softplus(r); }).cwiseProduct(eps_w);
      b_sampled = layer.bias + layer.bias_rho.unaryExpr([](double r) { return softplus(r); }).cwiseProduct(eps_b);
      w = &w_sampled;
      b = &b_sampled;
      if (tape) {
        tape->weight_noise.push_back(std::move(eps_w));
        tape->bias_noise.push_back(std::move(eps_b));
      }
    }
    if (tape) {
      tape->layer_input.push_back(a);
      tape->effective_weight.push_back(*w);
    }

    Eigen::MatrixXd z = a * w->transpose();
    z.rowwise() += b->transpose();

    if (l + 1 < n_layers) {
      if (tape) tape->pre_activation.push_back(z);
      a = z.cwiseMax(0.0);
      if (dropout) {
        Eigen::MatrixXd scale(a.rows(), a.cols());
        for (Eigen::Index j = 0; j < scale.cols(); ++j)
          for (Eigen::Index i = 0; i < scale.rows(); ++i) scale(i, j) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        a = a.cwiseProduct(scale);
        if (tape) tape->dropout_scale.push_back(std::move(scale));
      } else if (tape) {
        tape->dropout_scale.emplace_back();
      }
    } else {
      raw = std::move(z);
    }
  }
  if (tape) {
    tape->raw_output = raw;
    tape->recorded = true;
  }
  return apply_head(spec.head, raw);
}

NetworkState backward(const NetworkState& state, const NetworkSpec& spec, const ForwardTape& tape,
                      const Eigen::MatrixXd& output_grad) {
  if (!tape.recorded) throw std::logic_error("backward: no recorded forward pass");
  if (output_grad.rows() != tape.raw_output.rows() || output_grad.cols() != tape.raw_output.cols())
    throw std::invalid_argument("backward: output gradient shape does not match the forward output");

  NetworkState grads = state.zeros_like();
  const std::size_t n_layers = state.layers.size();
  const bool sampled = !tape.weight_noise.empty();

  Eigen::MatrixXd g = head_backward(spec.head, tape.raw_output, output_grad);
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = state.layers[l];
    auto& gl = grads.layers[l];
    const Eigen::MatrixXd dw = g.transpose() * tape.layer_input[l];
    const Eigen::VectorXd db = g.colwise().sum().transpose();
    gl.weight = dw;
    gl.bias = db;
    if (sampled) {
      // w = mu + softplus(rho) * eps
      gl.weight_rho =
          dw.cwiseProduct(tape.weight_noise[l]).cwiseProduct(layer.weight_rho.unaryExpr([](double r) { return logistic(r); }));
      gl.bias_rho =
          db.cwiseProduct(tape.bias_noise[l]).cwiseProduct(layer.bias_rho.unaryExpr([](double r) { return logistic(r); }));
    }
    if (l == 0) break;
    Eigen::MatrixXd da = g * tape.effective_weight[l];
    if (tape.dropout_scale[l - 1].size() > 0) da = da.cwiseProduct(tape.dropout_scale[l - 1]);
    g = da.cwiseProduct((tape.pre_activation[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return grads;
}

// ---------------------------------------------------------------------------

AdamState make_adam_state(const NetworkState& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(NetworkState& params, const NetworkState& grads, AdamState& opt, const AdamConfig& cfg) {
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = opt.first_moment.tensors();
  auto v = opt.second_moment.tensors();
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
    throw std::invalid_argument("adam_step: parameter/gradient layout mismatch");

  ++opt.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
  const double step_size = cfg.learning_rate / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);

  for (std::size_t t = 0; t < p.size(); ++t) {
    if (p[t].size() != g[t].size()) throw std::invalid_argument("adam_step: tensor size mismatch");
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      double grad = g[t][i];
      if (cfg.decoupled_weight_decay) {
        p[t][i] *= 1.0 - cfg.learning_rate * cfg.weight_decay;
      } else {
        grad += cfg.weight_decay * p[t][i];
      }
      m[t][i] = cfg.beta1 * m[t][i] + (1.0 - cfg.beta1) * grad;
      v[t][i] = cfg.beta2 * v[t][i] + (1.0 - cfg.beta2) * grad * grad;
      p[t][i] -= step_size * m[t][i] / (std::sqrt(v[t][i]) / sqrt_bc2 + cfg.epsilon);
    }
  }
}

}  // namespace censura
