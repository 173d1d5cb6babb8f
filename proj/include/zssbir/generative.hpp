#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "zssbir/data.hpp"
#include "zssbir/matrix.hpp"
#include "zssbir/nn.hpp"
#include "zssbir/rng.hpp"
#include "zssbir/training.hpp"

namespace zssbir::generative {

// Architecture of the conditional generators. Empty `hidden` means two
// hidden layers of width max(256, 2·d_latent).
struct ModelConfig {
  std::size_t d_img = 0;
  std::size_t d_sketch = 0;
  std::size_t d_latent = 64;
  std::vector<std::size_t> hidden;
  nn::Activation hidden_activation = nn::Activation::relu;
  std::vector<std::size_t> disc_hidden = {64, 64};
  double lambda_recons = 0.1;
  // Adversarial encoder term -log D(E(x)) instead of log(1 - D(E(x))).
  bool nonsaturating = false;

  std::vector<std::size_t> hidden_layers() const;
  void validate() const;
};

inline constexpr double kLogvarClamp = 10.0;
inline constexpr double kDiscClamp = 1e-7;

// Conditional VAE: encoder (x_img ‖ x_sketch) → (μ ‖ logvar), decoder
// (z ‖ x_sketch) → x_img, and a single linear layer regressing the sketch
// back from generated image features.
struct CvaeModel {
  nn::Mlp encoder;
  nn::Mlp decoder;
  nn::Mlp regressor;
  double lambda_recons = 0.1;
  std::size_t d_latent = 0;

  std::size_t d_img() const { return decoder.output_dim(); }
  std::size_t d_sketch() const { return regressor.output_dim(); }
  void validate() const;
  friend bool operator==(const CvaeModel&, const CvaeModel&) = default;
};

// Conditional adversarial autoencoder with a deterministic encoder and a
// discriminator on the latent code (prior samples are "real").
struct CaaeModel {
  nn::Mlp encoder;
  nn::Mlp decoder;
  nn::Mlp discriminator;
  nn::Mlp regressor;
  double lambda_recons = 0.1;
  std::size_t d_latent = 0;
  bool nonsaturating = false;

  std::size_t d_img() const { return decoder.output_dim(); }
  std::size_t d_sketch() const { return regressor.output_dim(); }
  void validate() const;
  friend bool operator==(const CaaeModel&, const CaaeModel&) = default;
};

CvaeModel make_cvae(const ModelConfig& cfg, Rng& rng);
CaaeModel make_caae(const ModelConfig& cfg, Rng& rng);

struct CvaeLoss {
  double total = 0.0;
  double kl = 0.0;
  double recon = 0.0;
  double sketch_recon = 0.0;
};

struct CvaeGradients {
  nn::GradientSet encoder;
  nn::GradientSet decoder;
  nn::GradientSet regressor;
};

// Batch means of: KL to N(0, I), squared reconstruction error of the image
// from one reparameterized sample, and squared error of the regressed sketch.
// total = kl + recon + λ·sketch_recon. `noise` is the B×d_latent ε used in
// z = μ + exp(logvar/2)⊙ε; gradients of `total` are written to `grads`.
CvaeLoss cvae_loss_with_noise(const CvaeModel& model, const Matrix& sketch, const Matrix& image,
                              const Matrix& noise, CvaeGradients* grads = nullptr);
CvaeLoss cvae_loss(const CvaeModel& model, const Matrix& sketch, const Matrix& image, Rng& rng);

struct CaaeLosses {
  double enc_dec = 0.0;
  double disc = 0.0;
  double recon = 0.0;
  double adversarial = 0.0;
  double sketch_recon = 0.0;
  // Fraction of prior codes scored > 0.5 plus encoded codes scored < 0.5.
  double disc_accuracy = 0.0;
};

struct CaaeGradients {
  nn::GradientSet encoder;
  nn::GradientSet decoder;
  nn::GradientSet discriminator;
  nn::GradientSet regressor;
};

// enc_dec = mean‖x̂ − x‖² + mean log(1 − D(E(x))) + λ·sketch_recon
// disc    = −[mean log D(z_prior) + mean log(1 − D(E(x)))]
// D outputs are clamped to [1e-7, 1 − 1e-7] before the logs. Gradients of
// each loss with respect to all four networks go to the matching pointer.
CaaeLosses caae_losses_with_noise(const CaaeModel& model, const Matrix& sketch, const Matrix& image,
                                  const Matrix& prior, CaaeGradients* enc_dec_grads = nullptr,
                                  CaaeGradients* disc_grads = nullptr);
CaaeLosses caae_losses(const CaaeModel& model, const Matrix& sketch, const Matrix& image, Rng& rng);

template <typename Model>
struct TrainResult {
  Model model;
  std::vector<TraceRecord> trace;
};

// Epoch-based Adam training; one trace record per epoch.
TrainResult<CvaeModel> train_cvae(const PairedDataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg);

// Alternating schedule: cfg.disc_iters_per_gen discriminator steps, then one
// encoder/decoder/regressor step; cfg.iterations such rounds. One trace
// record per generator iteration.
TrainResult<CaaeModel> train_caae(const PairedDataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg);

// n×d_img samples decoder(z_i ‖ sketch) with z_i ~ N(0, I), drawn in order.
Matrix cvae_generate(const CvaeModel& model, std::span<const double> sketch, std::size_t n, Rng& rng);
Matrix caae_generate(const CaaeModel& model, std::span<const double> sketch, std::size_t n, Rng& rng);

}  // namespace zssbir::generative
