#include <gtest/gtest.h>

#include <cmath>

#include "zssbir/errors.hpp"
#include "zssbir/linalg.hpp"

using namespace zssbir;

namespace {

Matrix random_symmetric(std::size_t n, Rng& rng) {
  const Matrix g = gaussian_sample(rng, n, n);
  return 0.5 * (g + transpose(g));
}

Matrix random_spd(std::size_t n, Rng& rng) {
  const Matrix g = gaussian_sample(rng, n + 2, n);
  return matmul_tn(g, g) + 0.1 * Matrix::identity(n);
}

double rel_diff(const Matrix& a, const Matrix& b) { return frobenius_norm(a - b) / frobenius_norm(b); }

}  // namespace

TEST(SymEig, IdentityHasUnitEigenvalues) {
  const auto e = sym_eig(Matrix::identity(3));
  for (double v : e.values) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(SymEig, DiagonalSortedDescendingWithAxisVectors) {
  const std::vector<double> d{1, 3, 2};
  const auto e = sym_eig(Matrix::diagonal(d));
  EXPECT_EQ(e.values, (Vector{3, 2, 1}));
  EXPECT_DOUBLE_EQ(std::abs(e.vectors(1, 0)), 1.0);
  EXPECT_DOUBLE_EQ(std::abs(e.vectors(2, 1)), 1.0);
  EXPECT_DOUBLE_EQ(std::abs(e.vectors(0, 2)), 1.0);
}

TEST(SymEig, ReconstructsRandomSymmetric) {
  Rng rng(1);
  const Matrix a = random_symmetric(6, rng);
  const auto e = sym_eig(a);
  const Matrix recon = matmul(matmul(e.vectors, Matrix::diagonal(e.values)), transpose(e.vectors));
  EXPECT_LE(rel_diff(recon, a), 1e-9);
  EXPECT_LE(frobenius_norm(matmul_tn(e.vectors, e.vectors) - Matrix::identity(6)), 1e-9);
  double sum = 0.0;
  for (double v : e.values) sum += v;
  EXPECT_NEAR(sum, trace(a), 1e-10);
}

TEST(SymEig, RejectsAsymmetricAndNonSquare) {
  EXPECT_THROW(sym_eig(Matrix{{1, 2}, {0, 1}}), SymmetryError);
  EXPECT_THROW(sym_eig(Matrix(2, 3)), DimensionError);
}

TEST(Sylvester, IdentityCoefficientsHalveRightHandSide) {
  Rng rng(2);
  const Matrix m = gaussian_sample(rng, 3, 4);
  const Matrix w = solve_sylvester(Matrix::identity(3), Matrix::identity(4), 2.0 * m);
  EXPECT_LE(rel_diff(w, m), 1e-14);
}

TEST(Sylvester, DiagonalClosedForm) {
  const std::vector<double> a{1, 2, 3};
  const std::vector<double> b{0.5, 4};
  const Matrix c{{1, 2}, {3, 4}, {5, 6}};
  const Matrix w = solve_sylvester(Matrix::diagonal(a), Matrix::diagonal(b), c);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(w(i, j), c(i, j) / (a[i] + b[j]), 1e-14);
  }
}

TEST(Sylvester, ScalarCase) {
  const Matrix w = solve_sylvester(Matrix{{2.0}}, Matrix{{3.0}}, Matrix{{10.0}});
  EXPECT_DOUBLE_EQ(w(0, 0), 2.0);
}

TEST(Sylvester, MatchesKroneckerOracleAndHasSmallResidual) {
  Rng rng(3);
  for (auto [n, m] : {std::pair{4, 5}, {5, 4}, {3, 3}}) {
    const Matrix a = random_spd(n, rng);
    const Matrix b = random_spd(m, rng);
    const Matrix c = gaussian_sample(rng, n, m);
    const Matrix w = solve_sylvester(a, b, c);
    EXPECT_LE(rel_diff(w, kron_solve_oracle(a, b, c)), 1e-8);
    EXPECT_LE(frobenius_norm(matmul(a, w) + matmul(w, b) - c) / frobenius_norm(c), 1e-10);
  }
}

TEST(Sylvester, KroneckerOracleAgreesWithDiagonalClosedForm) {
  const std::vector<double> a{2, 5};
  const std::vector<double> b{1, 3, 7};
  const Matrix c{{1, 2, 3}, {4, 5, 6}};
  const Matrix w = kron_solve_oracle(Matrix::diagonal(a), Matrix::diagonal(b), c);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(w(i, j), c(i, j) / (a[i] + b[j]), 1e-14);
  }
}

TEST(Sylvester, SingularSpectrumThrows) {
  const std::vector<double> a{1, 2};
  const std::vector<double> b{-1, 3};
  EXPECT_THROW(solve_sylvester(Matrix::diagonal(a), Matrix::diagonal(b), Matrix(2, 2, 1.0)), SingularityError);
  EXPECT_THROW(solve_sylvester(Matrix::identity(2), Matrix::identity(3), Matrix(3, 3)), DimensionError);
}

TEST(SolveSpd, SolvesAndDetectsSingular) {
  Rng rng(4);
  const Matrix a = random_spd(5, rng);
  const Matrix x = gaussian_sample(rng, 5, 2);
  EXPECT_LE(rel_diff(solve_spd(a, matmul(a, x)), x), 1e-10);
  EXPECT_THROW(solve_spd(Matrix{{1, 1}, {1, 1}}, Matrix(2, 1, 1.0)), SingularityError);
}

TEST(SolveLinear, RecoversSolution) {
  const Matrix a{{0, 2, 1}, {1, 1, 0}, {3, 0, 1}};
  const Matrix x{{1}, {-2}, {3}};
  EXPECT_LE(rel_diff(solve_linear(a, matmul(a, x)), x), 1e-14);
  EXPECT_THROW(solve_linear(Matrix{{1, 2}, {2, 4}}, Matrix(2, 1, 1.0)), SingularityError);
}

TEST(Cosine, KnownValues) {
  const std::vector<double> x{1, 2, 3};
  EXPECT_DOUBLE_EQ(cosine_similarity(x, x), 1.0);
  const std::vector<double> e1{1, 0}, e2{0, 1}, d{1, 1};
  EXPECT_DOUBLE_EQ(cosine_similarity(e1, e2), 0.0);
  EXPECT_NEAR(cosine_similarity(e1, d), 1.0 / std::sqrt(2.0), 1e-15);
  const std::vector<double> z{0, 0};
  EXPECT_THROW(cosine_similarity(e1, z), DegenerateInputError);
}

TEST(KMeans, SingleClusterIsMean) {
  Rng rng(5);
  const Matrix pts = gaussian_sample(rng, 40, 3);
  const auto r = kmeans(pts, 1, rng);
  const Vector mean = column_mean(pts);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(r.centroids(0, j), mean[j], 1e-12);
}

TEST(KMeans, TwoBlobsRecovered) {
  Rng rng(6);
  Matrix pts(100, 2);
  for (std::size_t i = 0; i < 100; ++i) {
    const double base = i < 50 ? 0.0 : 10.0;
    pts(i, 0) = base + 0.1 * rng.normal();
    pts(i, 1) = base + 0.1 * rng.normal();
  }
  const auto r = kmeans(pts, 2, rng);
  const bool first_low = r.centroids(0, 0) < 5.0;
  const std::size_t lo = first_low ? 0 : 1;
  EXPECT_NEAR(r.centroids(lo, 0), 0.0, 0.2);
  EXPECT_NEAR(r.centroids(lo, 1), 0.0, 0.2);
  EXPECT_NEAR(r.centroids(1 - lo, 0), 10.0, 0.2);
  EXPECT_NEAR(r.centroids(1 - lo, 1), 10.0, 0.2);
}

TEST(KMeans, EveryPointItsOwnCluster) {
  Rng rng(7);
  const Matrix pts = gaussian_sample(rng, 6, 2);
  const auto r = kmeans(pts, 6, rng);
  EXPECT_DOUBLE_EQ(r.objective_trace.back(), 0.0);
}

TEST(KMeans, ObjectiveNeverIncreases) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const Matrix pts = gaussian_sample(rng, 60, 4);
    const auto r = kmeans(pts, 5, rng);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
      EXPECT_LE(r.objective_trace[i], r.objective_trace[i - 1] + 1e-12);
    }
  }
}

TEST(KMeans, TooFewPointsThrows) {
  Rng rng(9);
  EXPECT_THROW(kmeans(Matrix(3, 2), 4, rng), CardinalityError);
  EXPECT_THROW(kmeans(Matrix(3, 2), 0, rng), CardinalityError);
}

TEST(KMeans, ConstantPointsGiveIdenticalCentroids) {
  Rng rng(10);
  const Matrix pts(20, 3, 1.5);
  const auto r = kmeans(pts, 5, rng);
  for (double v : r.centroids.values()) EXPECT_DOUBLE_EQ(v, 1.5);
}

TEST(GaussianSample, DeterministicAndStandardised) {
  Rng a(11), b(11), c(12);
  const Matrix x = gaussian_sample(a, 5, 3);
  EXPECT_EQ(x, gaussian_sample(b, 5, 3));
  EXPECT_NE(x, gaussian_sample(c, 5, 3));
  Rng big(13);
  const Matrix s = gaussian_sample(big, 100000, 1);
  double mean = 0.0, sq = 0.0;
  for (double v : s.values()) mean += v;
  mean /= 100000.0;
  for (double v : s.values()) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(sq / 99999.0, 1.0, 0.05);
}
