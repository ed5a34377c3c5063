#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "censura/random.hpp"

namespace censura {

enum class HeadKind {
  scalar,      ///< one output: the prediction
  gaussian,    ///< (mean, variance); variance = max(softplus(raw), floor)
  evidential,  ///< (gamma, nu, alpha, beta); softplus on nu and beta, softplus + 1 on alpha
};

std::string_view to_string(HeadKind h) noexcept;
HeadKind head_from_string(std::string_view s);
int head_width(HeadKind h) noexcept;

/// Architecture of a fully connected ReLU regression network.
struct NetworkSpec {
  int input_dim = 1;
  int hidden_layers = 2;
  int hidden_dim = 64;
  /// Halve the width after every hidden layer (integer division, min 1).
  bool decreasing_dim = false;
  /// Applied after every hidden activation.
  double dropout_rate = 0.0;
  HeadKind head = HeadKind::scalar;
  /// Bayes-by-backprop layers with a factorised Gaussian posterior per weight.
  bool variational = false;

  std::vector<int> hidden_widths() const;
  int output_width() const noexcept { return head_width(head); }
  /// Trainable scalars (means and rhos for variational layers).
  std::size_t parameter_count() const;
  void validate() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Parameters of one affine layer. weight is (out x in). The rho tensors are
/// empty for deterministic layers; the posterior std is softplus(rho).
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  Eigen::MatrixXd weight_rho;
  Eigen::VectorXd bias_rho;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Network parameters. Also used for gradients and optimiser moments, which
/// share the same layout.
struct NetworkState {
  std::vector<DenseLayer> layers;

  bool variational() const noexcept { return !layers.empty() && layers.front().weight_rho.size() > 0; }
  bool all_finite() const noexcept;
  std::size_t size() const noexcept;

  /// Flat views over every tensor, in a fixed order: for each layer weight,
  /// bias, then weight_rho and bias_rho when present.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  NetworkState zeros_like() const;
  NetworkState& operator+=(const NetworkState& other);
  NetworkState& operator*=(double s);

  friend bool operator==(const NetworkState&, const NetworkState&) = default;
};

/// Weights and biases drawn U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the
/// Kaiming-uniform (a = sqrt 5) default of common frameworks. Variational
/// layers draw their means the same way and set every rho to rho_init.
NetworkState init_state(const NetworkSpec& spec, std::uint64_t seed, double rho_init = -5.0);

enum class Mode {
  train,       ///< dropout on, variational weights sampled
  eval,        ///< dropout off, variational means
  mc_dropout,  ///< stochastic inference: same noise as train
};

/// Intermediate values of one forward pass, consumed by backward().
struct ForwardTape {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre_activation;  ///< per hidden layer, before ReLU
  std::vector<Eigen::MatrixXd> layer_input;     ///< input to each affine layer
  std::vector<Eigen::MatrixXd> dropout_scale;   ///< per hidden layer, 0 or 1/(1-p); empty when off
  std::vector<Eigen::MatrixXd> weight_noise;    ///< variational epsilon; empty when not sampled
  std::vector<Eigen::VectorXd> bias_noise;
  std::vector<Eigen::MatrixXd> effective_weight;
  Eigen::MatrixXd raw_output;
  bool recorded = false;
};

/// Runs the network on a (rows x input_dim) batch and returns head outputs
/// after their transforms. Randomness (dropout masks, weight noise) is drawn
/// from rng; pass a tape to enable backward().
Eigen::MatrixXd forward(const NetworkState& state, const NetworkSpec& spec, const Eigen::MatrixXd& batch, Mode mode,
                        CounterRng& rng, ForwardTape* tape = nullptr);

/// Gradients of a scalar loss with respect to every parameter, given the
/// gradient with respect to the transformed head outputs of the taped pass.
/// Throws std::logic_error when the tape was not recorded.
NetworkState backward(const NetworkState& state, const NetworkSpec& spec, const ForwardTape& tape,
                      const Eigen::MatrixXd& output_grad);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  /// false: g + wd * theta (classic L2 form). true: theta *= 1 - lr * wd.
  bool decoupled_weight_decay = false;
};

struct AdamState {
  NetworkState first_moment;
  NetworkState second_moment;
  long step = 0;
};

AdamState make_adam_state(const NetworkState& params);

/// One bias-corrected Adam update, in place.
void adam_step(NetworkState& params, const NetworkState& grads, AdamState& opt, const AdamConfig& cfg);

}  // namespace censura
