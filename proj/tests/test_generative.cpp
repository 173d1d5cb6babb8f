#include <gtest/gtest.h>

#include <cmath>

#include "zssbir/data.hpp"
#include "zssbir/errors.hpp"
#include "zssbir/generative.hpp"
#include "zssbir/gradcheck.hpp"
#include "zssbir/linalg.hpp"

using namespace zssbir;
using namespace zssbir::generative;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.d_img = 6;
  cfg.d_sketch = 4;
  cfg.d_latent = 3;
  cfg.hidden = {16};
  cfg.hidden_activation = nn::Activation::tanh;
  cfg.disc_hidden = {8};
  return cfg;
}

// image = sketch·A + b + N(0, σ²), one class per row block.
PairedDataset linear_task(std::size_t n, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix a = gaussian_sample(rng, 4, 6);
  PairedDataset d;
  d.sketch = gaussian_sample(rng, n, 4);
  d.image = matmul(d.sketch, a);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < 6; ++c) d.image(r, c) += 0.3 + sigma * rng.normal();
    d.labels.push_back("c" + std::to_string(r % 5));
  }
  return d;
}

void zero_last_layer(nn::Mlp& m) {
  for (double& v : m.layers.back().weight.values()) v = 0.0;
  for (double& v : m.layers.back().bias) v = 0.0;
}

}  // namespace

TEST(ModelConfig, ValidationAndDefaults) {
  ModelConfig cfg;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.d_img = 32;
  cfg.d_sketch = 16;
  cfg.validate();
  EXPECT_EQ(cfg.hidden_layers(), (std::vector<std::size_t>{256, 256}));
  cfg.d_latent = 200;
  EXPECT_EQ(cfg.hidden_layers(), (std::vector<std::size_t>{400, 400}));
}

TEST(CvaeModel, ShapesFollowConfig) {
  Rng rng(1);
  const CvaeModel m = make_cvae(small_config(), rng);
  EXPECT_EQ(m.encoder.input_dim(), 10u);
  EXPECT_EQ(m.encoder.output_dim(), 6u);
  EXPECT_EQ(m.decoder.input_dim(), 7u);
  EXPECT_EQ(m.d_img(), 6u);
  EXPECT_EQ(m.d_sketch(), 4u);
  EXPECT_EQ(m.regressor.layers.size(), 1u);
}

TEST(CvaeLoss, NoRegulariserMeansKlPlusRecon) {
  Rng rng(2);
  auto cfg = small_config();
  cfg.lambda_recons = 0.0;
  const CvaeModel m = make_cvae(cfg, rng);
  const Matrix s = gaussian_sample(rng, 5, 4), x = gaussian_sample(rng, 5, 6), eps = gaussian_sample(rng, 5, 3);
  const auto l = cvae_loss_with_noise(m, s, x, eps);
  EXPECT_EQ(l.total, l.kl + l.recon);
  EXPECT_GT(l.sketch_recon, 0.0);
}

TEST(CvaeLoss, StandardNormalPosteriorHasZeroKl) {
  Rng rng(3);
  CvaeModel m = make_cvae(small_config(), rng);
  zero_last_layer(m.encoder);
  const auto l = cvae_loss_with_noise(m, gaussian_sample(rng, 4, 4), gaussian_sample(rng, 4, 6),
                                      gaussian_sample(rng, 4, 3));
  EXPECT_EQ(l.kl, 0.0);
}

TEST(CvaeLoss, ShapeMismatchThrows) {
  Rng rng(4);
  const CvaeModel m = make_cvae(small_config(), rng);
  EXPECT_THROW(cvae_loss_with_noise(m, Matrix(3, 4), Matrix(3, 5), Matrix(3, 3)), DimensionError);
  EXPECT_THROW(cvae_loss_with_noise(m, Matrix(3, 4), Matrix(2, 6), Matrix(3, 3)), DimensionError);
}

TEST(CvaeLoss, GradientsMatchFiniteDifferences) {
  GradcheckOptions opts;
  for (const char* row : {"cvae_bound", "sketch_reconstructibility"}) {
    const auto r = run_gradcheck_row(row, opts);
    EXPECT_TRUE(r.passed) << row << " max error " << r.max_error;
  }
}

TEST(CaaeLoss, GradientsMatchFiniteDifferences) {
  GradcheckOptions opts;
  for (const char* row : {"caae_autoencoder", "caae_discriminator"}) {
    const auto r = run_gradcheck_row(row, opts);
    EXPECT_TRUE(r.passed) << row << " max error " << r.max_error;
  }
}

TEST(CaaeLoss, ConstantHalfDiscriminator) {
  Rng rng(5);
  CaaeModel m = make_caae(small_config(), rng);
  zero_last_layer(m.discriminator);
  const auto l = caae_losses_with_noise(m, gaussian_sample(rng, 4, 4), gaussian_sample(rng, 4, 6),
                                        gaussian_sample(rng, 4, 3));
  EXPECT_NEAR(l.adversarial, std::log(0.5), 1e-15);
  EXPECT_NEAR(l.disc, -2.0 * std::log(0.5), 1e-15);
  EXPECT_NEAR(l.disc, 1.3862943611198906, 1e-15);
}

TEST(CaaeLoss, NoRegulariserDropsSketchTerm) {
  Rng rng(6);
  auto cfg = small_config();
  cfg.lambda_recons = 0.0;
  const CaaeModel m = make_caae(cfg, rng);
  const auto l = caae_losses_with_noise(m, gaussian_sample(rng, 4, 4), gaussian_sample(rng, 4, 6),
                                        gaussian_sample(rng, 4, 3));
  EXPECT_EQ(l.enc_dec, l.recon + l.adversarial);
}

TEST(TrainCvae, DeterministicForSeed) {
  const PairedDataset d = linear_task(60, 0.05, 7);
  auto cfg = TrainConfig::cvae_defaults(11);
  cfg.epochs = 3;
  cfg.batch_size = 16;
  const auto a = train_cvae(d, small_config(), cfg);
  const auto b = train_cvae(d, small_config(), cfg);
  EXPECT_EQ(a.model, b.model);
  cfg.seed = 12;
  EXPECT_NE(train_cvae(d, small_config(), cfg).model, a.model);
}

TEST(TrainCvae, FitsLinearTaskFarBelowMeanPredictor) {
  const PairedDataset d = linear_task(400, 0.05, 8);
  auto cfg = TrainConfig::cvae_defaults(1);
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.adam.lr = 3e-3;
  auto mc = small_config();
  mc.hidden = {64, 64};
  const auto r = train_cvae(d, mc, cfg);
  ASSERT_EQ(r.trace.size(), 50u);
  EXPECT_LT(r.trace[9].get("total"), r.trace[0].get("total"));
  // Squared error of always predicting the mean image.
  double mean_predictor = 0.0;
  for (std::size_t c = 0; c < 6; ++c) {
    double mu = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) mu += d.image(i, c);
    mu /= static_cast<double>(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) sq += (d.image(i, c) - mu) * (d.image(i, c) - mu);
    mean_predictor += sq / static_cast<double>(d.size());
  }
  EXPECT_LT(r.trace.back().get("recon"), 0.02 * mean_predictor);
  EXPECT_GT(r.trace.back().get("recon"), 0.5 * 6 * 0.05 * 0.05);
}

TEST(TrainCvae, AuditSeesEveryRowOncePerEpoch) {
  const PairedDataset d = linear_task(50, 0.05, 9);
  auto cfg = TrainConfig::cvae_defaults(2);
  cfg.epochs = 2;
  cfg.batch_size = 16;
  std::vector<int> seen(50, 0);
  cfg.audit = [&](const PairedDataset&, std::span<const std::size_t> rows) {
    for (std::size_t r : rows) ++seen[r];
  };
  train_cvae(d, small_config(), cfg);
  for (int s : seen) EXPECT_EQ(s, 2);
}

TEST(TrainCvae, AuditFailureStopsTraining) {
  const PairedDataset d = linear_task(20, 0.05, 10);
  auto cfg = TrainConfig::cvae_defaults(3);
  cfg.audit = split_guard({"c3"});
  EXPECT_THROW(train_cvae(d, small_config(), cfg), SplitViolation);
}

TEST(TrainCvae, RejectsBadConfig) {
  const PairedDataset d = linear_task(20, 0.05, 10);
  auto cfg = TrainConfig::cvae_defaults(3);
  cfg.batch_size = 0;
  EXPECT_THROW(train_cvae(d, small_config(), cfg), ConfigError);
}

TEST(TrainCaae, DeterministicAndLearns) {
  const PairedDataset d = linear_task(200, 0.05, 11);
  auto cfg = TrainConfig::caae_defaults(4);
  cfg.iterations = 400;
  cfg.disc_iters_per_gen = 2;
  cfg.batch_size = 32;
  cfg.adam.lr = 1e-3;
  const auto a = train_caae(d, small_config(), cfg);
  const auto b = train_caae(d, small_config(), cfg);
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.trace.size(), 400u);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    first += a.trace[i].get("recon");
    last += a.trace[a.trace.size() - 1 - i].get("recon");
  }
  EXPECT_LT(last, first);
  double acc = 0.0;
  for (const auto& t : a.trace) {
    EXPECT_GE(t.get("disc_accuracy"), 0.0);
    EXPECT_LE(t.get("disc_accuracy"), 1.0);
    acc += t.get("disc_accuracy");
  }
  // Neither player wins outright: the discriminator sits between chance and perfect.
  acc /= static_cast<double>(a.trace.size());
  EXPECT_GT(acc, 0.4);
  EXPECT_LT(acc, 0.9);
}

TEST(Generate, DeterministicPrefixAndNondegenerate) {
  Rng rng(12);
  const CvaeModel m = make_cvae(small_config(), rng);
  const std::vector<double> s{0.1, -0.4, 0.7, 1.2};
  Rng a(5), b(5), c(5);
  const Matrix five = cvae_generate(m, s, 5, a);
  EXPECT_EQ(five, cvae_generate(m, s, 5, b));
  const Matrix one = cvae_generate(m, s, 1, c);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(one(0, j), five(0, j));
  bool varies = false;
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t r = 1; r < 5; ++r) varies |= five(r, j) != five(0, j);
  }
  EXPECT_TRUE(varies);
  const std::vector<double> wrong(3, 0.0);
  EXPECT_THROW(cvae_generate(m, wrong, 2, a), DimensionError);

  const CaaeModel cm = make_caae(small_config(), rng);
  Rng d(6), e(6);
  EXPECT_EQ(caae_generate(cm, s, 4, d), caae_generate(cm, s, 4, e));
}
