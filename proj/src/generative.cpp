#include "zssbir/generative.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "zssbir/errors.hpp"
#include "zssbir/linalg.hpp"

namespace zssbir::generative {

namespace {

using nn::Activation;
using nn::GradientSet;
using nn::Mlp;

std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

void check_batch(std::size_t d_img, std::size_t d_sketch, const Matrix& sketch, const Matrix& image) {
  if (sketch.rows() == 0) throw ConfigError("empty batch");
  if (sketch.rows() != image.rows()) throw DimensionError("sketch and image batches have different row counts");
  if (sketch.cols() != d_sketch) {
    throw DimensionError("sketch features have " + std::to_string(sketch.cols()) + " columns, model expects " +
                         std::to_string(d_sketch));
  }
  if (image.cols() != d_img) {
    throw DimensionError("image features have " + std::to_string(image.cols()) + " columns, model expects " +
                         std::to_string(d_img));
  }
}

// Mean squared row norm of (a - b) and, optionally, its gradient w.r.t. a.
double mean_squared_error(const Matrix& a, const Matrix& b, double weight, Matrix* grad) {
  const double inv_b = 1.0 / static_cast<double>(a.rows());
  double s = 0.0;
  if (grad) *grad = Matrix(a.rows(), a.cols());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
    if (grad) grad->values()[i] = 2.0 * weight * d * inv_b;
  }
  return s * inv_b;
}

double clamp_prob(double p) { return std::clamp(p, kDiscClamp, 1.0 - kDiscClamp); }
bool prob_in_range(double p) { return p >= kDiscClamp && p <= 1.0 - kDiscClamp; }

Matrix decode_samples(const Mlp& decoder, std::size_t d_latent, std::span<const double> sketch, std::size_t n,
                      Rng& rng) {
  if (n == 0) throw CardinalityError("generate: n must be at least 1");
  if (sketch.size() + d_latent != decoder.input_dim()) {
    throw DimensionError("generate: sketch has " + std::to_string(sketch.size()) + " features, decoder expects " +
                         std::to_string(decoder.input_dim() - d_latent));
  }
  const Matrix z = gaussian_sample(rng, n, d_latent);
  return mlp_forward(decoder, hstack(z, repeat_row(sketch, n)));
}

std::vector<std::span<const double>> const_blocks(std::initializer_list<const GradientSet*> sets) {
  std::vector<std::span<const double>> out;
  for (const auto* g : sets) nn::append_blocks(out, g->blocks());
  return out;
}

std::vector<std::span<double>> param_blocks(std::initializer_list<Mlp*> nets) {
  std::vector<std::span<double>> out;
  for (auto* m : nets) nn::append_blocks(out, m->parameter_blocks());
  return out;
}

void require_data(const PairedDataset& data) {
  data.validate();
  if (data.size() == 0) throw ConfigError("training set is empty");
}

}  // namespace

std::vector<std::size_t> ModelConfig::hidden_layers() const {
  if (!hidden.empty()) return hidden;
  const std::size_t width = std::max<std::size_t>(256, 2 * d_latent);
  return {width, width};
}

void ModelConfig::validate() const {
  if (d_img == 0 || d_sketch == 0 || d_latent == 0) throw ConfigError("model dimensions must be positive");
  if (!(lambda_recons >= 0.0)) throw ConfigError("lambda_recons must be non-negative");
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("hidden widths must be positive");
  }
}

void CvaeModel::validate() const {
  if (encoder.layers.empty() || decoder.layers.empty() || regressor.layers.size() != 1) {
    throw ConfigError("CVAE: malformed networks");
  }
  const std::size_t di = d_img();
  const std::size_t ds = d_sketch();
  if (encoder.input_dim() != di + ds || encoder.output_dim() != 2 * d_latent ||
      decoder.input_dim() != d_latent + ds || regressor.input_dim() != di) {
    throw DimensionError("CVAE: network dimensions do not chain");
  }
  if (!(lambda_recons >= 0.0)) throw ConfigError("CVAE: lambda_recons must be non-negative");
}

void CaaeModel::validate() const {
  if (encoder.layers.empty() || decoder.layers.empty() || discriminator.layers.empty() ||
      regressor.layers.size() != 1) {
    throw ConfigError("CAAE: malformed networks");
  }
  const std::size_t di = d_img();
  const std::size_t ds = d_sketch();
  if (encoder.input_dim() != di + ds || encoder.output_dim() != d_latent ||
      decoder.input_dim() != d_latent + ds || regressor.input_dim() != di ||
      discriminator.input_dim() != d_latent || discriminator.output_dim() != 1) {
    throw DimensionError("CAAE: network dimensions do not chain");
  }
  if (discriminator.output != Activation::sigmoid) throw ConfigError("CAAE: discriminator must end in a sigmoid");
  if (!(lambda_recons >= 0.0)) throw ConfigError("CAAE: lambda_recons must be non-negative");
}

CvaeModel make_cvae(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto hidden = cfg.hidden_layers();
  CvaeModel m;
  m.d_latent = cfg.d_latent;
  m.lambda_recons = cfg.lambda_recons;
  const auto enc = chain(cfg.d_img + cfg.d_sketch, hidden, 2 * cfg.d_latent);
  const auto dec = chain(cfg.d_latent + cfg.d_sketch, hidden, cfg.d_img);
  const std::vector<std::size_t> reg{cfg.d_img, cfg.d_sketch};
  m.encoder = nn::mlp_init(enc, cfg.hidden_activation, Activation::linear, rng);
  m.decoder = nn::mlp_init(dec, cfg.hidden_activation, Activation::linear, rng);
  m.regressor = nn::mlp_init(reg, cfg.hidden_activation, Activation::linear, rng);
  return m;
}

CaaeModel make_caae(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto hidden = cfg.hidden_layers();
  CaaeModel m;
  m.d_latent = cfg.d_latent;
  m.lambda_recons = cfg.lambda_recons;
  m.nonsaturating = cfg.nonsaturating;
  const auto enc = chain(cfg.d_img + cfg.d_sketch, hidden, cfg.d_latent);
  const auto dec = chain(cfg.d_latent + cfg.d_sketch, hidden, cfg.d_img);
  const auto disc = chain(cfg.d_latent, cfg.disc_hidden, 1);
  const std::vector<std::size_t> reg{cfg.d_img, cfg.d_sketch};
  m.encoder = nn::mlp_init(enc, cfg.hidden_activation, Activation::linear, rng);
  m.decoder = nn::mlp_init(dec, cfg.hidden_activation, Activation::linear, rng);
  m.discriminator = nn::mlp_init(disc, Activation::relu, Activation::sigmoid, rng);
  m.regressor = nn::mlp_init(reg, cfg.hidden_activation, Activation::linear, rng);
  return m;
}

CvaeLoss cvae_loss_with_noise(const CvaeModel& model, const Matrix& sketch, const Matrix& image, const Matrix& noise,
                              CvaeGradients* grads) {
  check_batch(model.d_img(), model.d_sketch(), sketch, image);
  const std::size_t batch = sketch.rows();
  const std::size_t latent = model.d_latent;
  if (noise.rows() != batch || noise.cols() != latent) throw DimensionError("cvae_loss: noise has the wrong shape");
  const double inv_b = 1.0 / static_cast<double>(batch);

  const auto enc_trace = nn::mlp_forward_trace(model.encoder, hstack(image, sketch));
  const Matrix& stats = enc_trace.output();
  Matrix mu(batch, latent);
  Matrix logvar(batch, latent);
  Matrix z(batch, latent);
  double kl = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < latent; ++j) {
      const double m = stats(i, j);
      const double lv = std::clamp(stats(i, latent + j), -kLogvarClamp, kLogvarClamp);
      mu(i, j) = m;
      logvar(i, j) = lv;
      z(i, j) = m + std::exp(0.5 * lv) * noise(i, j);
    }
    kl += nn::gaussian_kl(mu.row(i), logvar.row(i));
  }
  kl *= inv_b;

  const auto dec_trace = nn::mlp_forward_trace(model.decoder, hstack(z, sketch));
  const Matrix& x_hat = dec_trace.output();
  const auto reg_trace = nn::mlp_forward_trace(model.regressor, x_hat);

  CvaeLoss loss;
  loss.kl = kl;
  Matrix d_xhat;
  Matrix d_shat;
  loss.recon = mean_squared_error(x_hat, image, 1.0, grads ? &d_xhat : nullptr);
  loss.sketch_recon = mean_squared_error(reg_trace.output(), sketch, model.lambda_recons, grads ? &d_shat : nullptr);
  loss.total = loss.kl + loss.recon + model.lambda_recons * loss.sketch_recon;
  if (!grads) return loss;

  auto reg_bp = nn::backprop(model.regressor, reg_trace, d_shat);
  d_xhat += reg_bp.input_grad;
  auto dec_bp = nn::backprop(model.decoder, dec_trace, d_xhat);

  Matrix d_stats(batch, 2 * latent);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < latent; ++j) {
      const double dz = dec_bp.input_grad(i, j);
      const double lv = logvar(i, j);
      d_stats(i, j) = dz + mu(i, j) * inv_b;
      const double raw = stats(i, latent + j);
      if (raw >= -kLogvarClamp && raw <= kLogvarClamp) {
        d_stats(i, latent + j) = dz * noise(i, j) * 0.5 * std::exp(0.5 * lv) + 0.5 * (std::exp(lv) - 1.0) * inv_b;
      }
    }
  }
  auto enc_bp = nn::backprop(model.encoder, enc_trace, d_stats);
  grads->encoder = std::move(enc_bp.grads);
  grads->decoder = std::move(dec_bp.grads);
  grads->regressor = std::move(reg_bp.grads);
  return loss;
}

CvaeLoss cvae_loss(const CvaeModel& model, const Matrix& sketch, const Matrix& image, Rng& rng) {
  const Matrix noise = gaussian_sample(rng, sketch.rows(), model.d_latent);
  return cvae_loss_with_noise(model, sketch, image, noise);
}

CaaeLosses caae_losses_with_noise(const CaaeModel& model, const Matrix& sketch, const Matrix& image,
                                  const Matrix& prior, CaaeGradients* enc_dec_grads, CaaeGradients* disc_grads) {
  check_batch(model.d_img(), model.d_sketch(), sketch, image);
  const std::size_t batch = sketch.rows();
  if (prior.rows() != batch || prior.cols() != model.d_latent) {
    throw DimensionError("caae_losses: prior samples have the wrong shape");
  }
  const double inv_b = 1.0 / static_cast<double>(batch);

  const auto enc_trace = nn::mlp_forward_trace(model.encoder, hstack(image, sketch));
  const Matrix& code = enc_trace.output();
  const auto dec_trace = nn::mlp_forward_trace(model.decoder, hstack(code, sketch));
  const Matrix& x_hat = dec_trace.output();
  const auto reg_trace = nn::mlp_forward_trace(model.regressor, x_hat);
  const auto fake_trace = nn::mlp_forward_trace(model.discriminator, code);
  const auto real_trace = nn::mlp_forward_trace(model.discriminator, prior);

  CaaeLosses out;
  Matrix d_xhat;
  Matrix d_shat;
  out.recon = mean_squared_error(x_hat, image, 1.0, enc_dec_grads ? &d_xhat : nullptr);
  out.sketch_recon =
      mean_squared_error(reg_trace.output(), sketch, model.lambda_recons, enc_dec_grads ? &d_shat : nullptr);

  double log_fake = 0.0;       // mean log(1 - D(E(x)))
  double log_fake_ns = 0.0;    // mean log D(E(x))
  double log_real = 0.0;       // mean log D(z)
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double pf = fake_trace.output()(i, 0);
    const double pr = real_trace.output()(i, 0);
    log_fake += std::log(1.0 - clamp_prob(pf));
    log_fake_ns += std::log(clamp_prob(pf));
    log_real += std::log(clamp_prob(pr));
    if (pr > 0.5) ++correct;
    if (pf < 0.5) ++correct;
  }
  log_fake *= inv_b;
  log_fake_ns *= inv_b;
  log_real *= inv_b;
  out.adversarial = model.nonsaturating ? -log_fake_ns : log_fake;
  out.enc_dec = out.recon + out.adversarial + model.lambda_recons * out.sketch_recon;
  out.disc = -(log_real + log_fake);
  out.disc_accuracy = static_cast<double>(correct) / static_cast<double>(2 * batch);

  if (enc_dec_grads) {
    auto reg_bp = nn::backprop(model.regressor, reg_trace, d_shat);
    d_xhat += reg_bp.input_grad;
    auto dec_bp = nn::backprop(model.decoder, dec_trace, d_xhat);
    Matrix d_pf(batch, 1);
    for (std::size_t i = 0; i < batch; ++i) {
      const double pf = fake_trace.output()(i, 0);
      if (!prob_in_range(pf)) continue;
      d_pf(i, 0) = (model.nonsaturating ? -1.0 / pf : -1.0 / (1.0 - pf)) * inv_b;
    }
    auto fake_bp = nn::backprop(model.discriminator, fake_trace, d_pf);
    Matrix d_code = column_block(dec_bp.input_grad, 0, model.d_latent);
    d_code += fake_bp.input_grad;
    auto enc_bp = nn::backprop(model.encoder, enc_trace, d_code);
    enc_dec_grads->encoder = std::move(enc_bp.grads);
    enc_dec_grads->decoder = std::move(dec_bp.grads);
    enc_dec_grads->discriminator = std::move(fake_bp.grads);
    enc_dec_grads->regressor = std::move(reg_bp.grads);
  }

  if (disc_grads) {
    Matrix d_pr(batch, 1);
    Matrix d_pf(batch, 1);
    for (std::size_t i = 0; i < batch; ++i) {
      const double pr = real_trace.output()(i, 0);
      const double pf = fake_trace.output()(i, 0);
      if (prob_in_range(pr)) d_pr(i, 0) = -1.0 / pr * inv_b;
      if (prob_in_range(pf)) d_pf(i, 0) = 1.0 / (1.0 - pf) * inv_b;
    }
    auto real_bp = nn::backprop(model.discriminator, real_trace, d_pr);
    auto fake_bp = nn::backprop(model.discriminator, fake_trace, d_pf);
    real_bp.grads += fake_bp.grads;
    auto enc_bp = nn::backprop(model.encoder, enc_trace, fake_bp.input_grad);
    disc_grads->encoder = std::move(enc_bp.grads);
    disc_grads->decoder = GradientSet::zeros_like(model.decoder);
    disc_grads->discriminator = std::move(real_bp.grads);
    disc_grads->regressor = GradientSet::zeros_like(model.regressor);
  }
  return out;
}

CaaeLosses caae_losses(const CaaeModel& model, const Matrix& sketch, const Matrix& image, Rng& rng) {
  const Matrix prior = gaussian_sample(rng, sketch.rows(), model.d_latent);
  return caae_losses_with_noise(model, sketch, image, prior);
}

TrainResult<CvaeModel> train_cvae(const PairedDataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg) {
  require_data(data);
  cfg.validate();
  ModelConfig mc = model_cfg;
  mc.d_img = data.image.cols();
  mc.d_sketch = data.sketch.cols();

  Rng init_rng = Rng::derive(cfg.seed, 0);
  Rng batch_rng = Rng::derive(cfg.seed, 1);
  Rng noise_rng = Rng::derive(cfg.seed, 2);

  TrainResult<CvaeModel> result{make_cvae(mc, init_rng), {}};
  CvaeModel& model = result.model;
  auto params = param_blocks({&model.encoder, &model.decoder, &model.regressor});
  nn::AdamState adam(cfg.adam, nn::block_sizes(params));

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    CvaeLoss sum;
    for (const auto& rows : epoch_batches(data.size(), cfg.batch_size, batch_rng)) {
      if (cfg.audit) cfg.audit(data, rows);
      const Matrix sketch = gather_rows(data.sketch, rows);
      const Matrix image = gather_rows(data.image, rows);
      const Matrix noise = gaussian_sample(noise_rng, rows.size(), model.d_latent);
      CvaeGradients grads;
      const CvaeLoss loss = cvae_loss_with_noise(model, sketch, image, noise, &grads);
      if (!std::isfinite(loss.total)) {
        throw DivergenceError("train_cvae: non-finite loss in epoch " + std::to_string(epoch));
      }
      const double w = static_cast<double>(rows.size());
      sum.total += w * loss.total;
      sum.kl += w * loss.kl;
      sum.recon += w * loss.recon;
      sum.sketch_recon += w * loss.sketch_recon;
      const auto g = const_blocks({&grads.encoder, &grads.decoder, &grads.regressor});
      nn::adam_step(params, g, adam);
    }
    const double n = static_cast<double>(data.size());
    result.trace.push_back({"cvae",
                            epoch,
                            {{"total", sum.total / n},
                             {"kl", sum.kl / n},
                             {"recon", sum.recon / n},
                             {"sketch_recon", sum.sketch_recon / n}}});
  }
  return result;
}

TrainResult<CaaeModel> train_caae(const PairedDataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg) {
  require_data(data);
  cfg.validate();
  ModelConfig mc = model_cfg;
  mc.d_img = data.image.cols();
  mc.d_sketch = data.sketch.cols();

  Rng init_rng = Rng::derive(cfg.seed, 0);
  BatchStream batches(data.size(), cfg.batch_size, Rng::derive(cfg.seed, 1));
  Rng noise_rng = Rng::derive(cfg.seed, 2);

  TrainResult<CaaeModel> result{make_caae(mc, init_rng), {}};
  CaaeModel& model = result.model;
  auto gen_params = param_blocks({&model.encoder, &model.decoder, &model.regressor});
  auto disc_params = param_blocks({&model.discriminator});
  nn::AdamState gen_adam(cfg.adam, nn::block_sizes(gen_params));
  nn::AdamState disc_adam(cfg.adam, nn::block_sizes(disc_params));

  auto next_batch = [&](Matrix& sketch, Matrix& image) {
    const auto rows = batches.next();
    if (cfg.audit) cfg.audit(data, rows);
    sketch = gather_rows(data.sketch, rows);
    image = gather_rows(data.image, rows);
  };

  Matrix sketch;
  Matrix image;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    double disc_loss = 0.0;
    for (std::size_t d = 0; d < cfg.disc_iters_per_gen; ++d) {
      next_batch(sketch, image);
      const Matrix prior = gaussian_sample(noise_rng, sketch.rows(), model.d_latent);
      CaaeGradients g;
      const CaaeLosses l = caae_losses_with_noise(model, sketch, image, prior, nullptr, &g);
      if (!std::isfinite(l.disc)) {
        throw DivergenceError("train_caae: non-finite discriminator loss at iteration " + std::to_string(it));
      }
      disc_loss = l.disc;
      nn::adam_step(disc_params, const_blocks({&g.discriminator}), disc_adam);
    }

    next_batch(sketch, image);
    const Matrix prior = gaussian_sample(noise_rng, sketch.rows(), model.d_latent);
    CaaeGradients g;
    const CaaeLosses l = caae_losses_with_noise(model, sketch, image, prior, &g, nullptr);
    if (!std::isfinite(l.enc_dec)) {
      throw DivergenceError("train_caae: non-finite encoder/decoder loss at iteration " + std::to_string(it));
    }
    const auto gb = const_blocks({&g.encoder, &g.decoder, &g.regressor});
    nn::adam_step(gen_params, gb, gen_adam);
    result.trace.push_back({"caae",
                            it,
                            {{"enc_dec", l.enc_dec},
                             {"recon", l.recon},
                             {"adversarial", l.adversarial},
                             {"sketch_recon", l.sketch_recon},
                             {"disc", disc_loss},
                             {"disc_accuracy", l.disc_accuracy}}});
  }
  return result;
}

Matrix cvae_generate(const CvaeModel& model, std::span<const double> sketch, std::size_t n, Rng& rng) {
  return decode_samples(model.decoder, model.d_latent, sketch, n, rng);
}

Matrix caae_generate(const CaaeModel& model, std::span<const double> sketch, std::size_t n, Rng& rng) {
  return decode_samples(model.decoder, model.d_latent, sketch, n, rng);
}

}  // namespace zssbir::generative
