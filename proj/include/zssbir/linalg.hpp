#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "zssbir/matrix.hpp"
#include "zssbir/rng.hpp"

namespace zssbir {

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // column j pairs with values[j]; orthonormal
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
// Throws SymmetryError / DimensionError on bad input and ConvergenceError
// when the off-diagonal mass does not vanish within the sweep cap.
SymmetricEigen sym_eig(const Matrix& a);

// Solves A·W + W·B = C for symmetric A (n×n) and B (m×m).
//
// Bartels-Stewart reduces both coefficients to triangular (Schur) form; for
// symmetric coefficients the Schur form is diagonal, so the reduction is an
// eigendecomposition and the transformed system decouples entrywise:
//   W̃ = Uᵀ C V,  W̃_ij /= (λa_i + λb_j),  W = U W̃ Vᵀ.
// Throws SingularityError naming (i, j) when λa_i + λb_j vanishes.
Matrix solve_sylvester(const Matrix& a, const Matrix& b, const Matrix& c);

// Reference solver for the same equation: forms (I⊗A + Bᵀ⊗I) vec(W) = vec(C)
// densely and eliminates with partial pivoting. Limited to n, m <= 16.
Matrix kron_solve_oracle(const Matrix& a, const Matrix& b, const Matrix& c);

// Dense Gaussian elimination with partial pivoting; solves A·X = B.
Matrix solve_linear(const Matrix& a, const Matrix& b);

// Cholesky solve for symmetric positive definite A. Throws SingularityError
// when a pivot falls below `rel_tol` times the largest diagonal entry.
Matrix solve_spd(const Matrix& a, const Matrix& b, double rel_tol = 1e-12);

double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // max centroid shift
};

struct KMeansResult {
  Matrix centroids;                       // k×d
  std::vector<std::size_t> assignment;    // one cluster per point
  std::vector<double> objective_trace;    // WCSS after each assignment step
  std::size_t iterations = 0;
};

// Lloyd's algorithm. Initial centroids are k distinct rows drawn uniformly
// with `rng`; an empty cluster is reseeded with the point farthest from its
// current centroid.
KMeansResult kmeans(const Matrix& points, std::size_t k, Rng& rng, const KMeansOptions& options = {});

// n×d matrix of i.i.d. standard normals, filled row-major from rng.normal().
Matrix gaussian_sample(Rng& rng, std::size_t n, std::size_t d);

}  // namespace zssbir
