#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "zssbir/matrix.hpp"
#include "zssbir/rng.hpp"

namespace zssbir::nn {

enum class Activation : std::uint8_t { linear = 0, relu = 1, tanh = 2, sigmoid = 3 };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct Layer {
  Matrix weight;  // fan_in × fan_out
  Vector bias;    // fan_out

  friend bool operator==(const Layer&, const Layer&) = default;
};

// Feed-forward perceptron. Every layer except the last applies `hidden`;
// the last applies `output`.
struct Mlp {
  std::vector<Layer> layers;
  Activation hidden = Activation::relu;
  Activation output = Activation::linear;

  std::size_t input_dim() const { return layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.back().weight.cols(); }
  std::vector<std::size_t> dims() const;
  std::size_t parameter_count() const;

  // Weight then bias for each layer, in layer order.
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

// Weights ~ N(0, 2/fan_in) for relu nets (He) and N(0, 2/(fan_in+fan_out))
// otherwise (Xavier); biases zero.
Mlp mlp_init(std::span<const std::size_t> dims, Activation hidden, Activation output, Rng& rng);

// Gradient of a scalar loss with respect to every parameter of one Mlp.
struct GradientSet {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static GradientSet zeros_like(const Mlp& m);
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  GradientSet& operator+=(const GradientSet& other);
  GradientSet& operator*=(double s);
  bool all_zero() const;
};

// Intermediate values kept for backprop: inputs[i] feeds layer i, and
// inputs.back() is the network output. pre[i] is layer i before activation.
struct ForwardTrace {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
  const Matrix& output() const { return inputs.back(); }
};

Matrix mlp_forward(const Mlp& m, const Matrix& x);
ForwardTrace mlp_forward_trace(const Mlp& m, const Matrix& x);

struct Backprop {
  GradientSet grads;
  Matrix input_grad;
};

// `upstream` is dLoss/dOutput with the output's shape.
Backprop backprop(const Mlp& m, const ForwardTrace& trace, const Matrix& upstream);
Backprop backprop(const Mlp& m, const Matrix& x, const Matrix& upstream);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment buffers for a fixed list of parameter blocks.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;

  AdamState() = default;
  AdamState(const AdamConfig& cfg, std::span<const std::size_t> block_sizes);
};

std::vector<std::size_t> block_sizes(std::span<const std::span<double>> blocks);

// One bias-corrected Adam update: params -= lr·m̂/(√v̂ + ε).
void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state);

// KL(N(mu, diag(exp(logvar))) || N(0, I)).
double gaussian_kl(std::span<const double> mu, std::span<const double> logvar);

// Concatenates parameter (or gradient) block lists of several networks.
template <typename Block>
void append_blocks(std::vector<Block>& out, std::vector<Block> more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace zssbir::nn
