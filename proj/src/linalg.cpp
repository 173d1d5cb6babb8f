#include "zssbir/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "zssbir/errors.hpp"

namespace zssbir {

namespace {

constexpr std::size_t kMaxJacobiSweeps = 100;

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols()) {
    throw DimensionError(std::string(what) + ": expected a square matrix, got " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

double off_diagonal_mass(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = i + 1; j < a.cols(); ++j) s += a(i, j) * a(i, j);
  }
  return 2.0 * s;
}

}  // namespace

SymmetricEigen sym_eig(const Matrix& input) {
  require_square(input, "sym_eig");
  if (!input.all_finite()) throw DomainError("sym_eig: non-finite entry");
  const std::size_t n = input.rows();
  const double scale = max_abs(input);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(input(i, j) - input(j, i)) > 1e-10 * scale) {
        throw SymmetryError("sym_eig: entries (" + std::to_string(i) + "," + std::to_string(j) +
                            ") and (" + std::to_string(j) + "," + std::to_string(i) + ") differ");
      }
    }
  }

  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
  }
  Matrix v = Matrix::identity(n);
  const double total = squared_frobenius_norm(a);

  bool converged = false;
  for (std::size_t sweep = 0; sweep <= kMaxJacobiSweeps; ++sweep) {
    const double off = off_diagonal_mass(a);
    if (off == 0.0 || off <= 1e-30 * total) {
      converged = true;
      break;
    }
    if (sweep == kMaxJacobiSweeps) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) {
    throw ConvergenceError("sym_eig: off-diagonal mass did not vanish after " +
                           std::to_string(kMaxJacobiSweeps) + " sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  SymmetricEigen result{Vector(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    result.values[j] = a(src, src);
    // Sign convention: largest-magnitude component positive.
    std::size_t pivot = 0;
    for (std::size_t k = 1; k < n; ++k) {
      if (std::abs(v(k, src)) > std::abs(v(pivot, src))) pivot = k;
    }
    const double sign = v(pivot, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) result.vectors(k, j) = sign * v(k, src);
  }
  return result;
}

Matrix solve_sylvester(const Matrix& a, const Matrix& b, const Matrix& c) {
  require_square(a, "solve_sylvester(A)");
  require_square(b, "solve_sylvester(B)");
  if (c.rows() != a.rows() || c.cols() != b.rows()) {
    throw DimensionError("solve_sylvester: C must be " + std::to_string(a.rows()) + "x" +
                         std::to_string(b.rows()));
  }
  const SymmetricEigen ea = sym_eig(a);
  const SymmetricEigen eb = sym_eig(b);

  double scale = 1.0;
  for (double l : ea.values) scale = std::max(scale, std::abs(l));
  for (double l : eb.values) scale = std::max(scale, std::abs(l));

  Matrix rotated = matmul(matmul_tn(ea.vectors, c), eb.vectors);
  for (std::size_t i = 0; i < rotated.rows(); ++i) {
    for (std::size_t j = 0; j < rotated.cols(); ++j) {
      const double denom = ea.values[i] + eb.values[j];
      if (std::abs(denom) <= 1e-12 * scale) {
        throw SingularityError("solve_sylvester: eigenvalues lambda_A[" + std::to_string(i) +
                               "]=" + std::to_string(ea.values[i]) + " and lambda_B[" +
                               std::to_string(j) + "]=" + std::to_string(eb.values[j]) +
                               " sum to zero");
      }
      rotated(i, j) /= denom;
    }
  }
  return matmul_nt(matmul(ea.vectors, rotated), eb.vectors);
}

Matrix kron_solve_oracle(const Matrix& a, const Matrix& b, const Matrix& c) {
  require_square(a, "kron_solve_oracle(A)");
  require_square(b, "kron_solve_oracle(B)");
  const std::size_t n = a.rows();
  const std::size_t m = b.rows();
  if (n > 16 || m > 16) throw DimensionError("kron_solve_oracle: dimensions above 16 are not supported");
  if (c.rows() != n || c.cols() != m) throw DimensionError("kron_solve_oracle: C has the wrong shape");

  // Column-major vec: entry (i, j) lives at i + j·n.
  const std::size_t size = n * m;
  Matrix system(size, size);
  Matrix rhs(size, 1);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t row = i + j * n;
      rhs(row, 0) = c(i, j);
      for (std::size_t k = 0; k < n; ++k) system(row, k + j * n) += a(i, k);
      for (std::size_t l = 0; l < m; ++l) system(row, i + l * n) += b(l, j);
    }
  }
  const Matrix solution = solve_linear(system, rhs);
  Matrix w(n, m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) w(i, j) = solution(i + j * n, 0);
  }
  return w;
}

Matrix solve_linear(const Matrix& a, const Matrix& b) {
  require_square(a, "solve_linear");
  if (b.rows() != a.rows()) throw DimensionError("solve_linear: right-hand side has the wrong row count");
  const std::size_t n = a.rows();
  const std::size_t k = b.cols();
  Matrix lu = a;
  Matrix x = b;
  const double scale = std::max(max_abs(a), std::numeric_limits<double>::min());
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(lu(r, col)) > std::abs(lu(pivot, col))) pivot = r;
    }
    if (std::abs(lu(pivot, col)) <= 1e-13 * scale) {
      throw SingularityError("solve_linear: matrix is singular at column " + std::to_string(col));
    }
    if (pivot != col) {
      std::swap_ranges(lu.row(col).begin(), lu.row(col).end(), lu.row(pivot).begin());
      std::swap_ranges(x.row(col).begin(), x.row(col).end(), x.row(pivot).begin());
    }
    const double inv = 1.0 / lu(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu(r, col) * inv;
      if (f == 0.0) continue;
      for (std::size_t c2 = col; c2 < n; ++c2) lu(r, c2) -= f * lu(col, c2);
      for (std::size_t c2 = 0; c2 < k; ++c2) x(r, c2) -= f * x(col, c2);
    }
  }
  for (std::size_t col = n; col-- > 0;) {
    for (std::size_t c2 = 0; c2 < k; ++c2) {
      double s = x(col, c2);
      for (std::size_t j = col + 1; j < n; ++j) s -= lu(col, j) * x(j, c2);
      x(col, c2) = s / lu(col, col);
    }
  }
  return x;
}

Matrix solve_spd(const Matrix& a, const Matrix& b, double rel_tol) {
  require_square(a, "solve_spd");
  if (b.rows() != a.rows()) throw DimensionError("solve_spd: right-hand side has the wrong row count");
  const std::size_t n = a.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a(i, i));
  const double floor = rel_tol * std::max(max_diag, std::numeric_limits<double>::min());

  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > floor)) {
      throw SingularityError("solve_spd: matrix is not positive definite (pivot " + std::to_string(j) + ")");
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  Matrix x = b;
  const std::size_t k = b.cols();
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t j = 0; j < i; ++j) s -= l(i, j) * x(j, c);
      x(i, c) = s / l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = x(i, c);
      for (std::size_t j = i + 1; j < n; ++j) s -= l(j, i) * x(j, c);
      x(i, c) = s / l(i, i);
    }
  }
  return x;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("cosine_similarity: length mismatch");
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw DegenerateInputError("cosine_similarity: zero-norm vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

KMeansResult kmeans(const Matrix& points, std::size_t k, Rng& rng, const KMeansOptions& options) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  if (k == 0) throw CardinalityError("kmeans: k must be at least 1");
  if (n < k) {
    throw CardinalityError("kmeans: " + std::to_string(n) + " points cannot form " + std::to_string(k) +
                           " clusters");
  }

  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(pool[i], pool[j]);
  }
  KMeansResult result;
  result.centroids = gather_rows(points, std::span(pool).first(k));
  result.assignment.assign(n, 0);

  std::vector<double> dist(n);
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(points.row(i), result.centroids.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = squared_distance(points.row(i), result.centroids.row(c));
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      result.assignment[i] = best;
      dist[i] = best_d;
      objective += best_d;
    }
    result.objective_trace.push_back(objective);
    result.iterations = it + 1;

    Matrix updated(k, d);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = result.assignment[i];
      ++counts[c];
      auto src = points.row(i);
      auto dst = updated.row(c);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        auto src = points.row(far);
        std::copy(src.begin(), src.end(), updated.row(c).begin());
        dist[far] = -1.0;
        continue;
      }
      for (double& v : updated.row(c)) v /= static_cast<double>(counts[c]);
    }

    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      shift = std::max(shift, std::sqrt(squared_distance(updated.row(c), result.centroids.row(c))));
    }
    result.centroids = std::move(updated);
    if (shift < options.tolerance) break;
  }
  return result;
}

Matrix gaussian_sample(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

}  // namespace zssbir
