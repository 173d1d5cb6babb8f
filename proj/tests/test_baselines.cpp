#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "zssbir/baselines.hpp"
#include "zssbir/data.hpp"
#include "zssbir/errors.hpp"
#include "zssbir/linalg.hpp"
#include "zssbir/retrieval.hpp"

using namespace zssbir;
using namespace zssbir::baselines;

namespace {

// Norm of the central-difference gradient of f at w.
double fd_gradient_norm(const std::function<double(const Matrix&)>& f, Matrix w) {
  double sq = 0.0;
  for (double& v : w.values()) {
    const double saved = v;
    v = saved + 1e-4;
    const double up = f(w);
    v = saved - 1e-4;
    const double down = f(w);
    v = saved;
    const double g = (up - down) / 2e-4;
    sq += g * g;
  }
  return std::sqrt(sq);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

// Two well separated classes in both modalities.
PairedDataset two_class_pairs(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix ps = 3.0 * gaussian_sample(rng, 2, 4);
  const Matrix pi = 3.0 * gaussian_sample(rng, 2, 6);
  PairedDataset d;
  d.sketch = Matrix(2 * per_class, 4);
  d.image = Matrix(2 * per_class, 6);
  for (std::size_t r = 0; r < 2 * per_class; ++r) {
    const std::size_t c = r % 2;
    for (std::size_t j = 0; j < 4; ++j) d.sketch(r, j) = ps(c, j) + 0.3 * rng.normal();
    for (std::size_t j = 0; j < 6; ++j) d.image(r, j) = pi(c, j) + 0.3 * rng.normal();
    d.labels.push_back(c == 0 ? "left" : "right");
  }
  return d;
}

}  // namespace

TEST(DirectRegression, ExactForSquareSystem) {
  Rng rng(1);
  const Matrix xs = gaussian_sample(rng, 4, 4);
  const Matrix xi = gaussian_sample(rng, 4, 3);
  const LinearMap m = fit_direct_regression(xs, xi, 0.0);
  EXPECT_LE(max_abs_diff(matmul(xs, m.w), xi), 1e-9);
  EXPECT_LE(m.meta.objective, 1e-16);
  EXPECT_LE(max_abs_diff(fit_direct_regression(xs, xs, 0.0).w, Matrix::identity(4)), 1e-10);
}

TEST(DirectRegression, RidgeSolutionIsStationary) {
  Rng rng(2);
  const Matrix xs = gaussian_sample(rng, 50, 6);
  const Matrix xi = gaussian_sample(rng, 50, 4);
  const LinearMap m = fit_direct_regression(xs, xi, 0.1);
  auto f = [&](const Matrix& w) { return regression_objective(xs, xi, w, 0.1); };
  const double scale = fd_gradient_norm(f, Matrix(6, 4));
  EXPECT_LE(fd_gradient_norm(f, m.w), 1e-8 * scale);
}

TEST(DirectRegression, RankDeficientWithoutRidgeIsSingular) {
  Matrix xs(5, 2);
  for (std::size_t r = 0; r < 5; ++r) xs(r, 0) = xs(r, 1) = static_cast<double>(r);
  EXPECT_THROW(fit_direct_regression(xs, Matrix(5, 3, 1.0), 0.0), SingularityError);
  EXPECT_NO_THROW(fit_direct_regression(xs, Matrix(5, 3, 1.0), 1e-3));
}

TEST(Eszsl, NoRegularisationIsLeastSquares) {
  Rng rng(3);
  const Matrix xs = gaussian_sample(rng, 5, 5);
  const Matrix xi = gaussian_sample(rng, 5, 3);
  EXPECT_LE(max_abs_diff(matmul(xs, fit_eszsl(xs, xi, 0.0, 0.0).w), xi), 1e-8);
}

TEST(Eszsl, HeavyRegularisationShrinksToZero) {
  Rng rng(4);
  const Matrix xs = gaussian_sample(rng, 20, 5);
  const Matrix xi = gaussian_sample(rng, 20, 3);
  const LinearMap m = fit_eszsl(xs, xi, 1e6, 1e6);
  EXPECT_LT(frobenius_norm(m.w), 1e-3);
  EXPECT_DOUBLE_EQ(m.meta.beta, 1e12);
}

TEST(Eszsl, StationaryAndLocallyMinimal) {
  Rng rng(5);
  const Matrix xs = gaussian_sample(rng, 30, 5);
  const Matrix xi = gaussian_sample(rng, 30, 7);
  const double gamma = 0.5, lambda = 2.0;
  const LinearMap m = fit_eszsl(xs, xi, gamma, lambda);
  auto f = [&](const Matrix& w) { return eszsl_objective(xs, xi, w, gamma, lambda, gamma * lambda); };
  EXPECT_LE(fd_gradient_norm(f, m.w), 1e-6 * fd_gradient_norm(f, Matrix(5, 7)));
  const double base = f(m.w);
  for (int t = 0; t < 100; ++t) {
    Matrix d = gaussian_sample(rng, 5, 7);
    d *= 1e-2 / frobenius_norm(d);
    EXPECT_GE(f(m.w + d), base);
  }
}

TEST(Sae, NoRegularisationIsLeastSquares) {
  Rng rng(6);
  const Matrix xs = gaussian_sample(rng, 30, 4);
  const Matrix xi = gaussian_sample(rng, 30, 6);
  EXPECT_LE(max_abs_diff(fit_sae(xs, xi, 0.0).w, fit_direct_regression(xs, xi, 0.0).w), 1e-10);
}

TEST(Sae, IdenticalModalitiesGiveIdentity) {
  Rng rng(7);
  const Matrix xs = gaussian_sample(rng, 20, 4);
  const LinearMap m = fit_sae(xs, xs, 3.0);
  EXPECT_LE(max_abs_diff(m.w, Matrix::identity(4)), 1e-10);
  EXPECT_LE(m.meta.objective, 1e-18);
}

TEST(Sae, StationaryAndLocallyMinimal) {
  Rng rng(8);
  const Matrix xs = gaussian_sample(rng, 30, 5);
  const Matrix xi = gaussian_sample(rng, 30, 7);
  const LinearMap m = fit_sae(xs, xi, 0.8);
  auto f = [&](const Matrix& w) { return sae_objective(xs, xi, w, 0.8); };
  EXPECT_LE(fd_gradient_norm(f, m.w), 1e-6 * fd_gradient_norm(f, Matrix(5, 7)));
  const double base = f(m.w);
  for (int t = 0; t < 100; ++t) {
    Matrix d = gaussian_sample(rng, 5, 7);
    d *= 1e-2 / frobenius_norm(d);
    EXPECT_GE(f(m.w + d), base);
  }
}

TEST(LinearMap, ApplyMatchesMatrixProduct) {
  LinearMap m;
  m.w = Matrix{{1, 2, 3}, {4, 5, 6}};
  const std::vector<double> s{1, -1};
  EXPECT_EQ(m.apply(s), (Vector{-3, -3, -3}));
  EXPECT_THROW(m.apply(std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(SiameseLoss, ContrastiveValues) {
  EXPECT_EQ(siamese_loss_v1(0.0, true, 1.0), 0.0);
  EXPECT_EQ(siamese_loss_v1(1.5, false, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(siamese_loss_v1(0.5, false, 1.0), 0.125);
  EXPECT_DOUBLE_EQ(siamese_loss_v1(2.0, true, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(siamese_loss_v1_grad(0.5, false, 1.0), -0.5);
}

TEST(SiameseLoss, ExponentialValues) {
  EXPECT_EQ(siamese_loss_v2(0.0, true, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(siamese_loss_v2(0.0, false, 3.0), 6.0);
  EXPECT_NEAR(siamese_loss_v2(1.0, false, 1.0), 2.0 * std::exp(-2.77), 1e-15);
  EXPECT_NEAR(siamese_loss_v2(1.0, false, 1.0), 0.125324, 1e-6);
  const double h = 1e-6;
  for (bool same : {true, false}) {
    const double fd = (siamese_loss_v2(0.7 + h, same, 1.3) - siamese_loss_v2(0.7 - h, same, 1.3)) / (2 * h);
    EXPECT_NEAR(siamese_loss_v2_grad(0.7, same, 1.3), fd, 1e-7);
  }
}

TEST(TripletLoss, Values) {
  EXPECT_EQ(triplet_loss(0.0, 1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(triplet_loss(0.4, 0.4, 0.7), 0.7);
  EXPECT_DOUBLE_EQ(triplet_loss(0.3, 0.5, 1.0), 0.8);
}

TEST(TripletSampling, CoarseNegativesNeverShareClass) {
  Rng rng(9);
  const PairedDataset d = two_class_pairs(5, 1);
  for (int i = 0; i < 10000; ++i) {
    const auto t = sample_triplet(d, rng.uniform_index(d.size()), NegativeStrategy::coarse, rng);
    ASSERT_NE(d.labels[t.negative], d.labels[t.anchor]);
    ASSERT_EQ(t.positive, t.anchor);
  }
}

TEST(TripletSampling, FineNegativesSkipOnlyThePair) {
  Rng rng(10);
  PairedDataset d;
  d.sketch = Matrix(4, 2, 1.0);
  d.image = Matrix(4, 2, 1.0);
  d.labels = {"a", "a", "b", "b"};
  int same_class = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto t = sample_triplet(d, rng.uniform_index(4), NegativeStrategy::fine, rng);
    ASSERT_NE(t.negative, t.anchor);
    same_class += d.labels[t.negative] == d.labels[t.anchor];
  }
  EXPECT_GT(same_class, 0);
}

TEST(TripletSampling, DeterministicAndValidated) {
  const PairedDataset d = two_class_pairs(5, 2);
  Rng a(3), b(3);
  EXPECT_EQ(sample_triplets(d, NegativeStrategy::fine, 20, a), sample_triplets(d, NegativeStrategy::fine, 20, b));
  PairedDataset one_class = d;
  for (auto& l : one_class.labels) l = "only";
  EXPECT_THROW(sample_triplets(one_class, NegativeStrategy::coarse, 5, a), CardinalityError);
}

TEST(EmbeddingTraining, DeterministicForSeed) {
  const PairedDataset d = two_class_pairs(20, 3);
  EmbeddingConfig cfg;
  cfg.embed_dim = 3;
  cfg.hidden = {8};
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 4;
  EXPECT_EQ(train_embedding(d, EmbeddingLoss::siamese1, cfg).model,
            train_embedding(d, EmbeddingLoss::siamese1, cfg).model);
  EXPECT_EQ(cfg.epochs_for(EmbeddingLoss::triplet_fine), 2u);
  cfg.epochs = 0;
  EXPECT_EQ(cfg.epochs_for(EmbeddingLoss::siamese2), 20u);
  EXPECT_EQ(cfg.epochs_for(EmbeddingLoss::triplet_coarse), 80u);
}

TEST(EmbeddingTraining, ContrastivePullsClassesTogether) {
  const PairedDataset d = two_class_pairs(40, 5);
  EmbeddingConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden = {16};
  cfg.epochs = 30;
  cfg.batch_size = 16;
  cfg.adam.lr = 3e-3;
  cfg.seed = 6;
  const auto r = train_embedding(d, EmbeddingLoss::siamese1, cfg);
  const Matrix es = r.model.embed_sketches(d.sketch);
  const Matrix ei = r.model.embed_images(d.image);
  double same = 0.0, cross = 0.0;
  std::size_t ns = 0, nc = 0;
  for (std::size_t a = 0; a < d.size(); ++a) {
    for (std::size_t b = 0; b < d.size(); ++b) {
      const double dist = std::sqrt(squared_distance(es.row(a), ei.row(b)));
      if (d.labels[a] == d.labels[b]) {
        same += dist;
        ++ns;
      } else {
        cross += dist;
        ++nc;
      }
    }
  }
  EXPECT_LT(same / ns, cross / nc);
}

TEST(EmbeddingTraining, TripletRetrievalBeatsChance) {
  const PairedDataset d = two_class_pairs(40, 7);
  EmbeddingConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden = {16};
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.adam.lr = 3e-3;
  cfg.seed = 8;
  const auto r = train_embedding(d, EmbeddingLoss::triplet_coarse, cfg);
  auto model = r.model;
  const auto enc = retrieval::point_encoder(
      "triplet",
      [&](std::span<const double> s) {
        const Matrix e = model.embed_sketches(Matrix::row_vector(s));
        return Vector(e.row(0).begin(), e.row(0).end());
      },
      [&](const Matrix& db) { return model.embed_images(db); });
  FeatureStore db{d.image, d.labels, FeatureRole::database};
  retrieval::EvalConfig ec;
  ec.cutoff = 10;
  const auto rep = retrieval::evaluate_run(d.sketch, d.labels, db, enc, ec);
  EXPECT_GT(rep.mean_precision, 0.5);
}

TEST(EmbeddingTraining, SiameseExponentialEstimatesQ) {
  const PairedDataset d = two_class_pairs(10, 9);
  EmbeddingConfig cfg;
  cfg.embed_dim = 3;
  cfg.hidden = {8};
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 1;
  const auto r = train_embedding(d, EmbeddingLoss::siamese2, cfg);
  EXPECT_GT(r.model.margin_or_q, 0.0);
  EXPECT_EQ(r.model.loss, EmbeddingLoss::siamese2);
  ASSERT_EQ(r.trace.size(), 2u);
  EXPECT_GT(r.trace[0].get("margin_or_q"), 0.0);
}

TEST(DshLoss, PerfectAgreementIsZero) {
  const Matrix b{{1, -1, 1}, {-1, -1, 1}};
  const Matrix basis{{0.5, 2.0}, {1.0, -1.0}, {0.0, 3.0}};
  DshLossInputs in;
  in.b_i = b;
  in.b_s = b;
  in.f_i_out = b;
  in.f_s_out = b;
  in.d_basis = basis;
  in.phi_i = matmul(basis, b);
  in.phi_s = in.phi_i;
  in.w_sim = matmul_tn(b, b) * 0.5;  // margin m = 2
  const DshLoss l = dsh_loss_eval(in);
  EXPECT_EQ(l.total, 0.0);

  in.lambda = 0.0;
  in.gamma = 0.0;
  in.phi_i(0, 0) += 3.0;
  in.f_i_out(1, 1) = 0.0;
  in.w_sim(0, 0) = 0.0;
  const DshLoss only_cross = dsh_loss_eval(in);
  EXPECT_EQ(only_cross.total, only_cross.cross_view);
  EXPECT_GT(only_cross.semantic, 0.0);
}

TEST(DshLoss, FlippedBitRaisesQuantization) {
  const Matrix b{{1, -1}, {1, 1}};
  DshLossInputs in;
  in.b_i = b;
  in.b_s = b;
  in.f_i_out = b;
  in.f_s_out = b;
  in.d_basis = Matrix::identity(2);
  in.phi_i = b;
  in.phi_s = b;
  in.w_sim = Matrix(2, 2);
  const double before = dsh_loss_eval(in).quantization;
  in.b_i(0, 1) = 1.0;
  EXPECT_GT(dsh_loss_eval(in).quantization, before);
  in.b_i(0, 1) = 0.5;
  EXPECT_THROW(dsh_loss_eval(in), ConstraintError);
}
