#include "zssbir/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <span>
#include <sstream>

#include "zssbir/baselines.hpp"
#include "zssbir/errors.hpp"
#include "zssbir/generative.hpp"
#include "zssbir/linalg.hpp"
#include "zssbir/nn.hpp"
#include "zssbir/rng.hpp"

namespace zssbir {
namespace {

using nn::Mlp;

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) { return gaussian_sample(rng, r, c); }

std::vector<std::span<double>> params_of(std::initializer_list<Mlp*> nets) {
  std::vector<std::span<double>> out;
  for (Mlp* m : nets) nn::append_blocks(out, m->parameter_blocks());
  return out;
}

std::vector<std::span<const double>> grads_of(std::initializer_list<const nn::GradientSet*> sets) {
  std::vector<std::span<const double>> out;
  for (const auto* g : sets) nn::append_blocks(out, g->blocks());
  return out;
}

struct Comparison {
  double max_error = 0.0;
  std::size_t coordinates = 0;
};

// Perturbs every parameter coordinate in place and compares the central
// difference of `loss` with the matching analytic coordinate.
Comparison compare(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& analytic,
                   const std::function<double()>& loss, const GradcheckOptions& opts, bool corrupt) {
  if (params.size() != analytic.size()) throw DimensionError("gradcheck: parameter/gradient block count differs");
  Comparison c;
  bool damaged = false;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != analytic[b].size()) throw DimensionError("gradcheck: block size differs");
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      double& p = params[b][i];
      const double saved = p;
      p = saved + opts.step;
      const double up = loss();
      p = saved - opts.step;
      const double down = loss();
      p = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      double a = analytic[b][i];
      if (corrupt && !damaged) {
        a += 1e-2 * (std::abs(a) + 1.0);
        damaged = true;
      }
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
      c.max_error = std::max(c.max_error, err);
      ++c.coordinates;
    }
  }
  return c;
}

GradcheckRow gradient_row(std::string name, std::string description, const Comparison& c,
                          const GradcheckOptions& opts) {
  GradcheckRow row;
  row.name = std::move(name);
  row.description = std::move(description);
  row.max_error = c.max_error;
  row.tolerance = opts.tolerance;
  row.coordinates = c.coordinates;
  row.passed = std::isfinite(c.max_error) && c.max_error <= opts.tolerance;
  return row;
}

PairedDataset toy_pairs(Rng& rng) {
  PairedDataset d;
  d.sketch = random_matrix(6, 4, rng);
  d.image = random_matrix(6, 6, rng);
  d.labels = {"a", "a", "b", "b", "c", "c"};
  return d;
}

GradcheckRow embedding_row(std::string_view name, baselines::EmbeddingLoss loss, double margin_or_q,
                           const GradcheckOptions& opts, const char* description) {
  Rng rng = Rng::derive(opts.seed, 10);
  const PairedDataset data = toy_pairs(rng);
  baselines::EmbeddingPair model;
  const std::vector<std::size_t> sdims{4, 5, 3};
  const std::vector<std::size_t> idims{6, 5, 3};
  model.sketch_net = nn::mlp_init(sdims, nn::Activation::tanh, nn::Activation::linear, rng);
  model.image_net = nn::mlp_init(idims, nn::Activation::tanh, nn::Activation::linear, rng);
  model.embed_dim = 3;
  model.loss = loss;
  model.margin_or_q = margin_or_q;
  const auto strategy = loss == baselines::EmbeddingLoss::triplet_fine ? baselines::NegativeStrategy::fine
                                                                        : baselines::NegativeStrategy::coarse;
  const auto batch = baselines::sample_triplets(data, strategy, 6, rng);

  baselines::EmbeddingGradients g;
  baselines::embedding_batch_loss(model, data, batch, loss, margin_or_q, &g);
  const auto c = compare(params_of({&model.sketch_net, &model.image_net}), grads_of({&g.sketch_net, &g.image_net}),
                         [&] { return baselines::embedding_batch_loss(model, data, batch, loss, margin_or_q); }, opts,
                         opts.corrupt == name);
  return gradient_row(std::string(name), description, c, opts);
}

generative::ModelConfig small_generative_config(double lambda) {
  generative::ModelConfig cfg;
  cfg.d_img = 6;
  cfg.d_sketch = 4;
  cfg.d_latent = 3;
  cfg.hidden = {5};
  cfg.hidden_activation = nn::Activation::tanh;
  cfg.disc_hidden = {4};
  cfg.lambda_recons = lambda;
  return cfg;
}

GradcheckRow cvae_row(std::string_view name, double lambda, const GradcheckOptions& opts, const char* description) {
  Rng rng = Rng::derive(opts.seed, 20);
  auto model = generative::make_cvae(small_generative_config(lambda), rng);
  const Matrix sketch = random_matrix(4, 4, rng);
  const Matrix image = random_matrix(4, 6, rng);
  const Matrix noise = random_matrix(4, 3, rng);
  generative::CvaeGradients g;
  generative::cvae_loss_with_noise(model, sketch, image, noise, &g);
  const auto c = compare(params_of({&model.encoder, &model.decoder, &model.regressor}),
                         grads_of({&g.encoder, &g.decoder, &g.regressor}),
                         [&] { return generative::cvae_loss_with_noise(model, sketch, image, noise).total; }, opts,
                         opts.corrupt == name);
  return gradient_row(std::string(name), description, c, opts);
}

GradcheckRow caae_row(std::string_view name, bool discriminator_loss, const GradcheckOptions& opts,
                      const char* description) {
  Rng rng = Rng::derive(opts.seed, 30);
  auto model = generative::make_caae(small_generative_config(0.5), rng);
  const Matrix sketch = random_matrix(4, 4, rng);
  const Matrix image = random_matrix(4, 6, rng);
  const Matrix prior = random_matrix(4, 3, rng);
  generative::CaaeGradients g;
  if (discriminator_loss) {
    generative::caae_losses_with_noise(model, sketch, image, prior, nullptr, &g);
  } else {
    generative::caae_losses_with_noise(model, sketch, image, prior, &g, nullptr);
  }
  const auto c = compare(params_of({&model.encoder, &model.decoder, &model.discriminator, &model.regressor}),
                         grads_of({&g.encoder, &g.decoder, &g.discriminator, &g.regressor}),
                         [&] {
                           const auto l = generative::caae_losses_with_noise(model, sketch, image, prior);
                           return discriminator_loss ? l.disc : l.enc_dec;
                         },
                         opts, opts.corrupt == name);
  return gradient_row(std::string(name), description, c, opts);
}

// Finite-difference gradient of `objective` at w, relative to the gradient
// norm at W = 0, plus a check that no small random step lowers the objective.
GradcheckRow stationarity_row(std::string_view name, const char* description,
                              const std::function<Matrix(const Matrix&, const Matrix&)>& fit,
                              const std::function<double(const Matrix&, const Matrix&, const Matrix&)>& objective,
                              const GradcheckOptions& opts) {
  Rng rng = Rng::derive(opts.seed, 40);
  const Matrix xs = random_matrix(12, 5, rng);
  const Matrix xi = random_matrix(12, 7, rng);
  Matrix w = fit(xs, xi);
  if (opts.corrupt == name) w(0, 0) += 1e-3;

  auto fd_grad_norm = [&](Matrix at) {
    double sq = 0.0;
    for (double& v : at.values()) {
      const double saved = v;
      v = saved + opts.step;
      const double up = objective(xs, xi, at);
      v = saved - opts.step;
      const double down = objective(xs, xi, at);
      v = saved;
      const double g = (up - down) / (2.0 * opts.step);
      sq += g * g;
    }
    return std::sqrt(sq);
  };
  const double scale = std::max(fd_grad_norm(Matrix(w.rows(), w.cols())), 1e-300);
  const double rel = fd_grad_norm(w) / scale;

  const double base = objective(xs, xi, w);
  double worst_gain = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < opts.perturbations; ++t) {
    Matrix delta = random_matrix(w.rows(), w.cols(), rng);
    delta *= opts.perturbation_norm / frobenius_norm(delta);
    worst_gain = std::min(worst_gain, objective(xs, xi, w + delta) - base);
  }

  GradcheckRow row;
  row.name = std::string(name);
  row.description = description;
  row.max_error = rel;
  row.tolerance = opts.stationarity_tolerance;
  row.coordinates = w.rows() * w.cols();
  row.passed = std::isfinite(rel) && rel <= opts.stationarity_tolerance && worst_gain >= 0.0;
  char buf[96];
  std::snprintf(buf, sizeof buf, "min objective gain over %zu perturbations: %.3e", opts.perturbations, worst_gain);
  row.detail = buf;
  return row;
}

}  // namespace

const std::vector<std::string>& gradcheck_names() {
  static const std::vector<std::string> names{
      "siamese_contrastive", "siamese_exponential", "triplet",           "cvae_bound",
      "sketch_reconstructibility", "caae_autoencoder", "caae_discriminator", "eszsl_stationarity",
      "sae_stationarity"};
  return names;
}

GradcheckRow run_gradcheck_row(std::string_view name, const GradcheckOptions& opts) {
  using baselines::EmbeddingLoss;
  if (name == "siamese_contrastive") {
    return embedding_row(name, EmbeddingLoss::siamese1, 1.5, opts, "contrastive siamese loss, both branches");
  }
  if (name == "siamese_exponential") {
    return embedding_row(name, EmbeddingLoss::siamese2, 2.0, opts, "exponential siamese loss, both branches");
  }
  if (name == "triplet") {
    return embedding_row(name, EmbeddingLoss::triplet_coarse, 1.0, opts, "triplet ranking loss, both branches");
  }
  if (name == "cvae_bound") {
    return cvae_row(name, 0.0, opts, "CVAE KL + reconstruction, encoder/decoder/regressor");
  }
  if (name == "sketch_reconstructibility") {
    return cvae_row(name, 1.0, opts, "CVAE total with sketch reconstruction term, all networks");
  }
  if (name == "caae_autoencoder") {
    return caae_row(name, false, opts, "CAAE encoder/decoder loss, all four networks");
  }
  if (name == "caae_discriminator") {
    return caae_row(name, true, opts, "CAAE discriminator loss, all four networks");
  }
  if (name == "eszsl_stationarity") {
    constexpr double gamma = 0.3;
    constexpr double lambda = 0.7;
    return stationarity_row(
        name, "ESZSL closed form is a minimum of its objective",
        [](const Matrix& xs, const Matrix& xi) { return baselines::fit_eszsl(xs, xi, gamma, lambda).w; },
        [](const Matrix& xs, const Matrix& xi, const Matrix& w) {
          return baselines::eszsl_objective(xs, xi, w, gamma, lambda, gamma * lambda);
        },
        opts);
  }
  if (name == "sae_stationarity") {
    constexpr double lambda = 0.4;
    return stationarity_row(
        name, "SAE Sylvester solution is a minimum of its objective",
        [](const Matrix& xs, const Matrix& xi) { return baselines::fit_sae(xs, xi, lambda).w; },
        [](const Matrix& xs, const Matrix& xi, const Matrix& w) {
          return baselines::sae_objective(xs, xi, w, lambda);
        },
        opts);
  }
  throw ConfigError("unknown gradcheck row '" + std::string(name) + "'");
}

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& opts) {
  if (!opts.corrupt.empty() &&
      std::find(gradcheck_names().begin(), gradcheck_names().end(), opts.corrupt) == gradcheck_names().end()) {
    throw ConfigError("unknown gradcheck row '" + opts.corrupt + "'");
  }
  std::vector<GradcheckRow> rows;
  for (const auto& n : gradcheck_names()) rows.push_back(run_gradcheck_row(n, opts));
  return rows;
}

std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-26s %-6s %12s %10s %7s\n", "loss", "result", "max_error", "tolerance", "coords");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-26s %-6s %12.3e %10.1e %7zu", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                  r.max_error, r.tolerance, r.coordinates);
    out << buf;
    if (!r.detail.empty()) out << "  " << r.detail;
    out << '\n';
  }
  return out.str();
}

}  // namespace zssbir
