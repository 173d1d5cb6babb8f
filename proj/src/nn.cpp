#include "zssbir/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "zssbir/errors.hpp"

namespace zssbir::nn {

namespace {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::linear:
      return x;
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::tanh:
      return std::tanh(x);
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

// Derivative expressed through the pre-activation and the activated value.
double activate_grad(Activation a, double pre, double post) {
  switch (a) {
    case Activation::linear:
      return 1.0;
    case Activation::relu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::tanh:
      return 1.0 - post * post;
    case Activation::sigmoid:
      return post * (1.0 - post);
  }
  return 1.0;
}

Matrix affine(const Layer& layer, const Matrix& x) {
  Matrix out = matmul(x, layer.weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += layer.bias[j];
  }
  return out;
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::linear:
      return "linear";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::sigmoid:
      return "sigmoid";
  }
  return "linear";
}

Activation activation_from_string(std::string_view name) {
  if (name == "linear") return Activation::linear;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::vector<std::size_t> Mlp::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(layers.front().weight.rows());
  for (const auto& l : layers) d.push_back(l.weight.cols());
  return d;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<std::span<double>> Mlp::parameter_blocks() {
  std::vector<std::span<double>> blocks;
  for (auto& l : layers) {
    blocks.push_back(l.weight.values());
    blocks.push_back(l.bias);
  }
  return blocks;
}

std::vector<std::span<const double>> Mlp::parameter_blocks() const {
  std::vector<std::span<const double>> blocks;
  for (const auto& l : layers) {
    blocks.push_back(l.weight.values());
    blocks.push_back(l.bias);
  }
  return blocks;
}

Mlp mlp_init(std::span<const std::size_t> dims, Activation hidden, Activation output, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("mlp_init: need at least an input and an output dimension");
  for (std::size_t d : dims) {
    if (d == 0) throw ConfigError("mlp_init: layer dimensions must be positive");
  }
  Mlp m;
  m.hidden = hidden;
  m.output = output;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double fan_in = static_cast<double>(dims[i]);
    const double fan_out = static_cast<double>(dims[i + 1]);
    const double variance = hidden == Activation::relu ? 2.0 / fan_in : 2.0 / (fan_in + fan_out);
    const double stddev = std::sqrt(variance);
    Layer layer{Matrix(dims[i], dims[i + 1]), Vector(dims[i + 1], 0.0)};
    for (double& w : layer.weight.values()) w = stddev * rng.normal();
    m.layers.push_back(std::move(layer));
  }
  return m;
}

GradientSet GradientSet::zeros_like(const Mlp& m) {
  GradientSet g;
  for (const auto& l : m.layers) {
    g.weights.emplace_back(l.weight.rows(), l.weight.cols());
    g.biases.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

std::vector<std::span<double>> GradientSet::blocks() {
  std::vector<std::span<double>> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back(weights[i].values());
    out.push_back(biases[i]);
  }
  return out;
}

std::vector<std::span<const double>> GradientSet::blocks() const {
  std::vector<std::span<const double>> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back(weights[i].values());
    out.push_back(biases[i]);
  }
  return out;
}

GradientSet& GradientSet::operator+=(const GradientSet& other) {
  if (other.weights.size() != weights.size()) throw DimensionError("GradientSet: layer count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] += other.weights[i];
    if (biases[i].size() != other.biases[i].size()) throw DimensionError("GradientSet: bias mismatch");
    for (std::size_t j = 0; j < biases[i].size(); ++j) biases[i][j] += other.biases[i][j];
  }
  return *this;
}

GradientSet& GradientSet::operator*=(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) {
    for (double& v : b) v *= s;
  }
  return *this;
}

bool GradientSet::all_zero() const {
  for (auto block : blocks()) {
    for (double v : block) {
      if (v != 0.0) return false;
    }
  }
  return true;
}

ForwardTrace mlp_forward_trace(const Mlp& m, const Matrix& x) {
  if (m.layers.empty()) throw ConfigError("mlp_forward: network has no layers");
  if (x.cols() != m.input_dim()) {
    throw DimensionError("mlp_forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(m.input_dim()));
  }
  ForwardTrace trace;
  trace.inputs.reserve(m.layers.size() + 1);
  trace.pre.reserve(m.layers.size());
  trace.inputs.push_back(x);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const Activation act = i + 1 == m.layers.size() ? m.output : m.hidden;
    Matrix pre = affine(m.layers[i], trace.inputs.back());
    Matrix post = pre;
    if (act != Activation::linear) {
      for (double& v : post.values()) v = activate(act, v);
    }
    trace.pre.push_back(std::move(pre));
    trace.inputs.push_back(std::move(post));
  }
  return trace;
}

Matrix mlp_forward(const Mlp& m, const Matrix& x) {
  if (m.layers.empty()) throw ConfigError("mlp_forward: network has no layers");
  if (x.cols() != m.input_dim()) {
    throw DimensionError("mlp_forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(m.input_dim()));
  }
  Matrix h = x;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const Activation act = i + 1 == m.layers.size() ? m.output : m.hidden;
    h = affine(m.layers[i], h);
    if (act != Activation::linear) {
      for (double& v : h.values()) v = activate(act, v);
    }
  }
  return h;
}

Backprop backprop(const Mlp& m, const ForwardTrace& trace, const Matrix& upstream) {
  const Matrix& out = trace.output();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw DimensionError("backprop: upstream gradient shape does not match the network output");
  }
  Backprop result{GradientSet::zeros_like(m), Matrix()};
  Matrix delta = upstream;
  for (std::size_t i = m.layers.size(); i-- > 0;) {
    const Activation act = i + 1 == m.layers.size() ? m.output : m.hidden;
    if (act != Activation::linear) {
      auto d = delta.values();
      auto pre = trace.pre[i].values();
      auto post = trace.inputs[i + 1].values();
      for (std::size_t j = 0; j < d.size(); ++j) d[j] *= activate_grad(act, pre[j], post[j]);
    }
    result.grads.weights[i] = matmul_tn(trace.inputs[i], delta);
    auto& bias_grad = result.grads.biases[i];
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      auto dr = delta.row(r);
      for (std::size_t j = 0; j < dr.size(); ++j) bias_grad[j] += dr[j];
    }
    delta = matmul_nt(delta, m.layers[i].weight);
  }
  result.input_grad = std::move(delta);
  return result;
}

Backprop backprop(const Mlp& m, const Matrix& x, const Matrix& upstream) {
  return backprop(m, mlp_forward_trace(m, x), upstream);
}

AdamState::AdamState(const AdamConfig& cfg, std::span<const std::size_t> sizes) : config(cfg) {
  for (std::size_t n : sizes) {
    first_moment.emplace_back(n, 0.0);
    second_moment.emplace_back(n, 0.0);
  }
}

std::vector<std::size_t> block_sizes(std::span<const std::span<double>> blocks) {
  std::vector<std::size_t> sizes;
  sizes.reserve(blocks.size());
  for (auto b : blocks) sizes.push_back(b.size());
  return sizes;
}

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment block counts differ");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != state.first_moment[b].size()) {
      throw DimensionError("adam_step: block " + std::to_string(b) + " has mismatched sizes");
    }
  }
  ++state.step;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto g = grads[b];
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

double gaussian_kl(std::span<const double> mu, std::span<const double> logvar) {
  if (mu.size() != logvar.size()) throw DimensionError("gaussian_kl: mu and logvar lengths differ");
  double kl = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    kl += mu[j] * mu[j] + std::exp(logvar[j]) - 1.0 - logvar[j];
  }
  return 0.5 * kl;
}

}  // namespace zssbir::nn
