#include "zssbir/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "zssbir/errors.hpp"
#include "zssbir/linalg.hpp"

namespace zssbir::baselines {

namespace {

constexpr double kSiameseDecay = 2.77;

void check_pairs(const Matrix& x_s, const Matrix& x_i) {
  if (x_s.rows() != x_i.rows()) {
    throw DimensionError("sketch and image matrices have " + std::to_string(x_s.rows()) + " and " +
                         std::to_string(x_i.rows()) + " rows");
  }
  if (x_s.rows() == 0) throw ConfigError("cannot fit a map on zero pairs");
}

void require_nonnegative(double v, const char* name) {
  if (!(v >= 0.0)) throw ConfigError(std::string(name) + " must be non-negative");
}

Matrix scaled_gram(const Matrix& x, double s) {
  Matrix g = matmul_tn(x, x);
  g *= s;
  return g;
}

double euclidean(std::span<const double> a, std::span<const double> b) { return std::sqrt(squared_distance(a, b)); }

}  // namespace

std::string_view to_string(LinearMethod m) {
  switch (m) {
    case LinearMethod::direct_regression:
      return "regression";
    case LinearMethod::eszsl:
      return "eszsl";
    case LinearMethod::sae:
      return "sae";
  }
  return "regression";
}

std::string_view to_string(EmbeddingLoss l) {
  switch (l) {
    case EmbeddingLoss::siamese1:
      return "siamese1";
    case EmbeddingLoss::siamese2:
      return "siamese2";
    case EmbeddingLoss::triplet_coarse:
      return "triplet-coarse";
    case EmbeddingLoss::triplet_fine:
      return "triplet-fine";
  }
  return "siamese1";
}

Vector LinearMap::apply(std::span<const double> sketch) const {
  const Matrix out = matmul(Matrix::row_vector(sketch), w);
  return {out.values().begin(), out.values().end()};
}

Matrix LinearMap::apply(const Matrix& sketches) const { return matmul(sketches, w); }

double regression_objective(const Matrix& x_s, const Matrix& x_i, const Matrix& w, double ridge) {
  return squared_frobenius_norm(matmul(x_s, w) - x_i) + ridge * squared_frobenius_norm(w);
}

double eszsl_objective(const Matrix& x_s, const Matrix& x_i, const Matrix& w, double gamma, double lambda,
                       double beta) {
  const Matrix xsw = matmul(x_s, w);
  return squared_frobenius_norm(xsw - x_i) + gamma * squared_frobenius_norm(matmul_nt(x_i, w)) +
         lambda * squared_frobenius_norm(xsw) + beta * squared_frobenius_norm(w);
}

double sae_objective(const Matrix& x_s, const Matrix& x_i, const Matrix& w, double lambda) {
  return squared_frobenius_norm(x_i - matmul(x_s, w)) + lambda * squared_frobenius_norm(matmul_nt(x_i, w) - x_s);
}

LinearMap fit_direct_regression(const Matrix& x_s, const Matrix& x_i, double ridge) {
  check_pairs(x_s, x_i);
  require_nonnegative(ridge, "ridge");
  Matrix normal = matmul_tn(x_s, x_s);
  for (std::size_t i = 0; i < normal.rows(); ++i) normal(i, i) += ridge;
  LinearMap map;
  try {
    map.w = solve_spd(normal, matmul_tn(x_s, x_i));
  } catch (const SingularityError& e) {
    throw SingularityError(std::string("direct regression: normal matrix is singular; use a positive ridge (") +
                           e.what() + ")");
  }
  map.meta.method = LinearMethod::direct_regression;
  map.meta.ridge = ridge;
  map.meta.objective = regression_objective(x_s, x_i, map.w, ridge);
  return map;
}

LinearMap fit_eszsl(const Matrix& x_s, const Matrix& x_i, double gamma, double lambda) {
  check_pairs(x_s, x_i);
  require_nonnegative(gamma, "gamma");
  require_nonnegative(lambda, "lambda");
  const double beta = gamma * lambda;
  const Matrix a = scaled_gram(x_s, 1.0 + lambda);
  Matrix b = scaled_gram(x_i, gamma);
  for (std::size_t i = 0; i < b.rows(); ++i) b(i, i) += beta;
  LinearMap map;
  map.w = solve_sylvester(a, b, matmul_tn(x_s, x_i));
  map.meta = {LinearMethod::eszsl, 0.0, gamma, lambda, beta, 0.0};
  map.meta.objective = eszsl_objective(x_s, x_i, map.w, gamma, lambda, beta);
  return map;
}

LinearMap fit_sae(const Matrix& x_s, const Matrix& x_i, double lambda) {
  check_pairs(x_s, x_i);
  require_nonnegative(lambda, "lambda");
  const Matrix a = matmul_tn(x_s, x_s);
  const Matrix b = scaled_gram(x_i, lambda);
  Matrix c = matmul_tn(x_s, x_i);
  c *= 1.0 + lambda;
  LinearMap map;
  map.w = solve_sylvester(a, b, c);
  map.meta = {LinearMethod::sae, 0.0, 0.0, lambda, 0.0, 0.0};
  map.meta.objective = sae_objective(x_s, x_i, map.w, lambda);
  return map;
}

double siamese_loss_v1(double dist, bool same_class, double margin) {
  if (dist < 0.0) throw DomainError("siamese_loss_v1: negative distance");
  if (!(margin > 0.0)) throw DomainError("siamese_loss_v1: margin must be positive");
  if (same_class) return 0.5 * dist * dist;
  const double gap = std::max(0.0, margin - dist);
  return 0.5 * gap * gap;
}

double siamese_loss_v1_grad(double dist, bool same_class, double margin) {
  if (dist < 0.0) throw DomainError("siamese_loss_v1: negative distance");
  if (same_class) return dist;
  return -std::max(0.0, margin - dist);
}

double siamese_loss_v2(double dist, bool same_class, double q) {
  if (!(q > 0.0)) throw DomainError("siamese_loss_v2: Q must be positive");
  if (dist < 0.0) throw DomainError("siamese_loss_v2: negative distance");
  if (same_class) return (2.0 / q) * dist * dist;
  return 2.0 * q * std::exp(-kSiameseDecay * dist / q);
}

double siamese_loss_v2_grad(double dist, bool same_class, double q) {
  if (!(q > 0.0)) throw DomainError("siamese_loss_v2: Q must be positive");
  if (same_class) return (4.0 / q) * dist;
  return -2.0 * kSiameseDecay * std::exp(-kSiameseDecay * dist / q);
}

double triplet_loss(double d_pos, double d_neg, double margin) { return std::max(0.0, margin + d_pos - d_neg); }

Triplet sample_triplet(const PairedDataset& data, std::size_t anchor, NegativeStrategy strategy, Rng& rng) {
  const std::size_t n = data.size();
  Triplet t{anchor, anchor, 0};
  if (strategy == NegativeStrategy::fine) {
    std::size_t j = rng.uniform_index(n - 1);
    if (j >= anchor) ++j;
    t.negative = j;
    return t;
  }
  const std::string& own = data.labels[anchor];
  // Rejection sampling is uniform over the other-class rows.
  std::size_t j = rng.uniform_index(n);
  while (data.labels[j] == own) j = rng.uniform_index(n);
  t.negative = j;
  return t;
}

std::vector<Triplet> sample_triplets(const PairedDataset& data, NegativeStrategy strategy, std::size_t count,
                                     Rng& rng) {
  data.validate();
  if (strategy == NegativeStrategy::fine && data.size() < 2) {
    throw CardinalityError("fine triplet sampling needs at least two images");
  }
  if (strategy == NegativeStrategy::coarse) {
    const bool two_classes = std::any_of(data.labels.begin(), data.labels.end(),
                                         [&](const std::string& l) { return l != data.labels.front(); });
    if (data.size() == 0 || !two_classes) throw CardinalityError("coarse triplet sampling needs at least two classes");
  }
  std::vector<Triplet> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(sample_triplet(data, rng.uniform_index(data.size()), strategy, rng));
  }
  return out;
}

std::size_t EmbeddingConfig::epochs_for(EmbeddingLoss loss) const {
  if (epochs != 0) return epochs;
  return loss == EmbeddingLoss::siamese1 || loss == EmbeddingLoss::siamese2 ? 20 : 80;
}

double embedding_batch_loss(const EmbeddingPair& model, const PairedDataset& data, std::span<const Triplet> batch,
                            EmbeddingLoss loss, double margin_or_q, EmbeddingGradients* grads) {
  if (batch.empty()) throw ConfigError("embedding_batch_loss: empty batch");
  std::vector<std::size_t> anchors;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  for (const auto& t : batch) {
    anchors.push_back(t.anchor);
    positives.push_back(t.positive);
    negatives.push_back(t.negative);
  }
  const auto s_trace = nn::mlp_forward_trace(model.sketch_net, gather_rows(data.sketch, anchors));
  const auto p_trace = nn::mlp_forward_trace(model.image_net, gather_rows(data.image, positives));
  const auto n_trace = nn::mlp_forward_trace(model.image_net, gather_rows(data.image, negatives));
  const Matrix& es = s_trace.output();
  const Matrix& ep = p_trace.output();
  const Matrix& en = n_trace.output();
  const std::size_t b = batch.size();
  const std::size_t e = es.cols();

  Matrix d_s(b, e);
  Matrix d_p(b, e);
  Matrix d_n(b, e);
  double total = 0.0;
  const bool triplet = loss == EmbeddingLoss::triplet_coarse || loss == EmbeddingLoss::triplet_fine;
  // Siamese losses average over 2b pairs, triplet losses over b triplets.
  const double inv = triplet ? 1.0 / static_cast<double>(b) : 0.5 / static_cast<double>(b);

  for (std::size_t i = 0; i < b; ++i) {
    const auto s = es.row(i);
    const auto p = ep.row(i);
    const auto n = en.row(i);
    if (triplet) {
      const double dp = squared_distance(s, p);
      const double dn = squared_distance(s, n);
      const double l = triplet_loss(dp, dn, margin_or_q);
      total += l;
      if (l > 0.0) {
        for (std::size_t j = 0; j < e; ++j) {
          d_s(i, j) = inv * (2.0 * (s[j] - p[j]) - 2.0 * (s[j] - n[j]));
          d_p(i, j) = inv * (-2.0 * (s[j] - p[j]));
          d_n(i, j) = inv * (2.0 * (s[j] - n[j]));
        }
      }
      continue;
    }
    const double dp = euclidean(s, p);
    const double dn = euclidean(s, n);
    double gp = 0.0;
    double gn = 0.0;
    if (loss == EmbeddingLoss::siamese1) {
      total += siamese_loss_v1(dp, true, margin_or_q) + siamese_loss_v1(dn, false, margin_or_q);
      gp = siamese_loss_v1_grad(dp, true, margin_or_q);
      gn = siamese_loss_v1_grad(dn, false, margin_or_q);
    } else {
      total += siamese_loss_v2(dp, true, margin_or_q) + siamese_loss_v2(dn, false, margin_or_q);
      gp = siamese_loss_v2_grad(dp, true, margin_or_q);
      gn = siamese_loss_v2_grad(dn, false, margin_or_q);
    }
    for (std::size_t j = 0; j < e; ++j) {
      const double up = dp > 0.0 ? inv * gp * (s[j] - p[j]) / dp : 0.0;
      const double un = dn > 0.0 ? inv * gn * (s[j] - n[j]) / dn : 0.0;
      d_s(i, j) = up + un;
      d_p(i, j) = -up;
      d_n(i, j) = -un;
    }
  }
  total *= inv;

  if (grads) {
    grads->sketch_net = nn::backprop(model.sketch_net, s_trace, d_s).grads;
    grads->image_net = nn::backprop(model.image_net, p_trace, d_p).grads;
    grads->image_net += nn::backprop(model.image_net, n_trace, d_n).grads;
  }
  return total;
}

EmbeddingTrainResult train_embedding(const PairedDataset& data, EmbeddingLoss loss, const EmbeddingConfig& cfg) {
  data.validate();
  if (data.size() == 0) throw ConfigError("training set is empty");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(cfg.margin > 0.0)) throw ConfigError("margin must be positive");
  if (cfg.embed_dim == 0) throw ConfigError("embed_dim must be positive");

  Rng init_rng = Rng::derive(cfg.seed, 0);
  Rng batch_rng = Rng::derive(cfg.seed, 1);
  Rng sample_rng = Rng::derive(cfg.seed, 2);

  auto dims_for = [&](std::size_t in) {
    std::vector<std::size_t> dims{in};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(cfg.embed_dim);
    return dims;
  };
  EmbeddingTrainResult result;
  EmbeddingPair& model = result.model;
  model.sketch_net = nn::mlp_init(dims_for(data.sketch.cols()), cfg.hidden_activation, nn::Activation::linear,
                                  init_rng);
  model.image_net = nn::mlp_init(dims_for(data.image.cols()), cfg.hidden_activation, nn::Activation::linear,
                                 init_rng);
  model.embed_dim = cfg.embed_dim;
  model.loss = loss;
  model.margin_or_q = cfg.margin;

  const NegativeStrategy strategy = loss == EmbeddingLoss::triplet_fine ? NegativeStrategy::fine
                                                                         : NegativeStrategy::coarse;
  // Validates the data against the strategy up front.
  (void)sample_triplets(data, strategy, 0, sample_rng);

  std::vector<std::span<double>> params;
  nn::append_blocks(params, model.sketch_net.parameter_blocks());
  nn::append_blocks(params, model.image_net.parameter_blocks());
  nn::AdamState adam(cfg.adam, nn::block_sizes(params));

  const std::size_t epochs = cfg.epochs_for(loss);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    std::vector<Triplet> triplets;
    triplets.reserve(data.size());
    for (std::size_t a = 0; a < data.size(); ++a) triplets.push_back(sample_triplet(data, a, strategy, sample_rng));

    if (loss == EmbeddingLoss::siamese2) {
      const Matrix es = model.embed_sketches(data.sketch);
      const Matrix ei = model.embed_images(data.image);
      double q = 0.0;
      for (const auto& t : triplets) {
        q = std::max(q, euclidean(es.row(t.anchor), ei.row(t.positive)));
        q = std::max(q, euclidean(es.row(t.anchor), ei.row(t.negative)));
      }
      model.margin_or_q = std::max(q, 1e-6);
    }

    double sum = 0.0;
    for (const auto& rows : epoch_batches(triplets.size(), cfg.batch_size, batch_rng)) {
      std::vector<Triplet> batch;
      std::vector<std::size_t> touched;
      for (std::size_t r : rows) {
        batch.push_back(triplets[r]);
        touched.push_back(triplets[r].anchor);
        touched.push_back(triplets[r].negative);
      }
      if (cfg.audit) cfg.audit(data, touched);
      EmbeddingGradients g;
      const double l = embedding_batch_loss(model, data, batch, loss, model.margin_or_q, &g);
      if (!std::isfinite(l)) {
        throw DivergenceError("train_embedding: non-finite loss in epoch " + std::to_string(epoch));
      }
      sum += l * static_cast<double>(batch.size());
      std::vector<std::span<const double>> gb;
      nn::append_blocks(gb, std::as_const(g.sketch_net).blocks());
      nn::append_blocks(gb, std::as_const(g.image_net).blocks());
      nn::adam_step(params, gb, adam);
    }
    result.trace.push_back({std::string(to_string(loss)),
                            epoch,
                            {{"loss", sum / static_cast<double>(triplets.size())}, {"margin_or_q", model.margin_or_q}}});
  }
  return result;
}

DshLoss dsh_loss_eval(const DshLossInputs& in) {
  const std::size_t m = in.b_i.rows();
  const std::size_t n_i = in.b_i.cols();
  const std::size_t n_s = in.b_s.cols();
  const std::size_t e = in.d_basis.rows();
  auto require = [](bool ok, const char* what) {
    if (!ok) throw DimensionError(std::string("dsh_loss_eval: ") + what);
  };
  require(in.b_s.rows() == m, "B_S code length differs from B_I");
  require(in.w_sim.rows() == n_i && in.w_sim.cols() == n_s, "similarity matrix must be n_i x n_s");
  require(in.d_basis.cols() == m, "basis must have one column per code bit");
  require(in.phi_i.rows() == e && in.phi_i.cols() == n_i, "image class embeddings must be e x n_i");
  require(in.phi_s.rows() == e && in.phi_s.cols() == n_s, "sketch class embeddings must be e x n_s");
  require(in.f_i_out.rows() == m && in.f_i_out.cols() == n_i, "image network output must be m x n_i");
  require(in.f_s_out.rows() == m && in.f_s_out.cols() == n_s, "sketch network output must be m x n_s");
  for (const Matrix* codes : {&in.b_i, &in.b_s}) {
    for (double v : codes->values()) {
      if (v != 1.0 && v != -1.0) throw ConstraintError("dsh_loss_eval: binary codes must be +1 or -1");
    }
  }
  const double margin = in.margin.value_or(static_cast<double>(m));

  DshLoss out;
  out.cross_view = squared_frobenius_norm(in.w_sim * margin - matmul_tn(in.b_i, in.b_s));
  out.semantic = squared_frobenius_norm(in.phi_i - matmul(in.d_basis, in.b_i)) +
                 squared_frobenius_norm(in.phi_s - matmul(in.d_basis, in.b_s));
  out.quantization = squared_frobenius_norm(in.f_i_out - in.b_i) + squared_frobenius_norm(in.f_s_out - in.b_s);
  out.total = out.cross_view + in.lambda * out.semantic + in.gamma * out.quantization;
  return out;
}

}  // namespace zssbir::baselines
