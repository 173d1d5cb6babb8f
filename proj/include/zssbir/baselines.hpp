#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "zssbir/data.hpp"
#include "zssbir/matrix.hpp"
#include "zssbir/nn.hpp"
#include "zssbir/rng.hpp"
#include "zssbir/training.hpp"

namespace zssbir::baselines {

// ---------------------------------------------------------------------------
// Closed-form sketch → image maps. W is d_sketch × d_img; a sketch row s maps
// to s·W.

enum class LinearMethod : std::uint8_t { direct_regression = 0, eszsl = 1, sae = 2 };

std::string_view to_string(LinearMethod m);

struct LinearFitMeta {
  LinearMethod method = LinearMethod::direct_regression;
  double ridge = 0.0;
  double gamma = 0.0;
  double lambda = 0.0;
  double beta = 0.0;
  double objective = 0.0;  // objective value at the returned W
};

struct LinearMap {
  Matrix w;
  LinearFitMeta meta;

  Vector apply(std::span<const double> sketch) const;
  Matrix apply(const Matrix& sketches) const;
  friend bool operator==(const LinearMap& a, const LinearMap& b) {
    return a.w == b.w && a.meta.method == b.meta.method && a.meta.ridge == b.meta.ridge &&
           a.meta.gamma == b.meta.gamma && a.meta.lambda == b.meta.lambda && a.meta.beta == b.meta.beta &&
           a.meta.objective == b.meta.objective;
  }
};

// ‖X_S W − X_I‖² + ridge·‖W‖²
double regression_objective(const Matrix& x_s, const Matrix& x_i, const Matrix& w, double ridge);
// ‖X_S W − X_I‖² + γ‖X_I Wᵀ‖² + λ‖X_S W‖² + β‖W‖²
double eszsl_objective(const Matrix& x_s, const Matrix& x_i, const Matrix& w, double gamma, double lambda,
                       double beta);
// ‖X_I − X_S W‖² + λ‖X_I Wᵀ − X_S‖²
double sae_objective(const Matrix& x_s, const Matrix& x_i, const Matrix& w, double lambda);

// Normal equations (X_SᵀX_S + ridge·I) W = X_SᵀX_I.
LinearMap fit_direct_regression(const Matrix& x_s, const Matrix& x_i, double ridge);

// Stationary point of the ESZSL objective with β = γλ:
//   (1 + λ)·X_SᵀX_S·W + W·(γ·X_IᵀX_I + β·I) = X_SᵀX_I
LinearMap fit_eszsl(const Matrix& x_s, const Matrix& x_i, double gamma, double lambda);

// Stationary point of the SAE objective:
//   X_SᵀX_S·W + λ·W·X_IᵀX_I = (1 + λ)·X_SᵀX_I
LinearMap fit_sae(const Matrix& x_s, const Matrix& x_i, double lambda);

// ---------------------------------------------------------------------------
// Pointwise embedding losses. Each `_grad` is the derivative with respect to
// the distance argument(s).

// same: ½·d²; different: ½·max(0, margin − d)²
double siamese_loss_v1(double dist, bool same_class, double margin);
double siamese_loss_v1_grad(double dist, bool same_class, double margin);

// same: (2/Q)·d²; different: 2Q·exp(−2.77·d/Q)
double siamese_loss_v2(double dist, bool same_class, double q);
double siamese_loss_v2_grad(double dist, bool same_class, double q);

// max(0, margin + d_pos − d_neg)
double triplet_loss(double d_pos, double d_neg, double margin);

enum class NegativeStrategy : std::uint8_t { coarse, fine };

// Sketch row `anchor`, its paired image row `positive`, and a negative image row.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

// coarse: negative image drawn uniformly from classes other than the anchor's.
// fine:   negative drawn uniformly from every image except the anchor's pair.
Triplet sample_triplet(const PairedDataset& data, std::size_t anchor, NegativeStrategy strategy, Rng& rng);
std::vector<Triplet> sample_triplets(const PairedDataset& data, NegativeStrategy strategy, std::size_t count,
                                     Rng& rng);

enum class EmbeddingLoss : std::uint8_t { siamese1 = 0, siamese2 = 1, triplet_coarse = 2, triplet_fine = 3 };

std::string_view to_string(EmbeddingLoss l);

struct EmbeddingConfig {
  std::size_t embed_dim = 64;
  std::vector<std::size_t> hidden = {256};
  nn::Activation hidden_activation = nn::Activation::relu;
  double margin = 1.0;
  std::size_t epochs = 0;  // 0: 20 for siamese losses, 80 for triplet losses
  std::size_t batch_size = 64;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
  BatchAudit audit;

  std::size_t epochs_for(EmbeddingLoss loss) const;
};

// Two-branch mapping into a shared space compared by Euclidean distance.
struct EmbeddingPair {
  nn::Mlp sketch_net;
  nn::Mlp image_net;
  std::size_t embed_dim = 0;
  EmbeddingLoss loss = EmbeddingLoss::siamese1;
  // Margin for siamese1/triplet, the estimated distance bound Q for siamese2.
  double margin_or_q = 1.0;

  Matrix embed_sketches(const Matrix& sketches) const { return nn::mlp_forward(sketch_net, sketches); }
  Matrix embed_images(const Matrix& images) const { return nn::mlp_forward(image_net, images); }
  friend bool operator==(const EmbeddingPair&, const EmbeddingPair&) = default;
};

struct EmbeddingGradients {
  nn::GradientSet sketch_net;
  nn::GradientSet image_net;
};

// Mean loss over a set of triplets. Siamese losses score each triplet as one
// same-class pair (anchor, positive) and one cross pair (anchor, negative);
// triplet losses use squared Euclidean distances.
double embedding_batch_loss(const EmbeddingPair& model, const PairedDataset& data, std::span<const Triplet> batch,
                            EmbeddingLoss loss, double margin_or_q, EmbeddingGradients* grads = nullptr);

struct EmbeddingTrainResult {
  EmbeddingPair model;
  std::vector<TraceRecord> trace;
};

// For siamese2, Q is re-estimated before every epoch as the largest pair
// distance among that epoch's sampled pairs.
EmbeddingTrainResult train_embedding(const PairedDataset& data, EmbeddingLoss loss, const EmbeddingConfig& cfg);

// ---------------------------------------------------------------------------
// Deep sketch hashing objective (evaluation only).

struct DshLossInputs {
  Matrix b_i;      // m × n_i, entries ±1
  Matrix b_s;      // m × n_s, entries ±1
  Matrix w_sim;    // n_i × n_s
  Matrix phi_i;    // e × n_i
  Matrix phi_s;    // e × n_s
  Matrix d_basis;  // e × m
  Matrix f_i_out;  // m × n_i
  Matrix f_s_out;  // m × n_s
  double lambda = 0.01;
  double gamma = 1e-5;
  // Scalar multiplying the similarity matrix; defaults to the code length m.
  std::optional<double> margin;
};

struct DshLoss {
  double total = 0.0;
  double cross_view = 0.0;
  double semantic = 0.0;
  double quantization = 0.0;
};

DshLoss dsh_loss_eval(const DshLossInputs& in);

}  // namespace zssbir::baselines
