// Jacobi-rotation decompositions for small dense matrices: one-sided Jacobi
// SVD and the classical symmetric eigenvalue iteration. Intended for
// min(rows, cols) <= 512; everything is O(n^3) per sweep.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dlrlock/matrix.hpp"

namespace dlrlock {

struct SvdResult {
  Matrix u;                // rows x k, orthonormal columns
  std::vector<double> s;   // k singular values, descending
  Matrix vt;               // k x cols, orthonormal rows
};

namespace detail {

// One-sided Jacobi on a tall matrix (rows >= cols): rotate column pairs until
// all are mutually orthogonal, accumulate the rotations in V.
inline void one_sided_jacobi(Matrix& a, Matrix& v, double tol, int max_sweeps) {
  const std::size_t m = a.rows(), n = a.cols();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = a(i, p), y = a(i, q);
          app += x * x;
          aqq += y * y;
          apq += x * y;
        }
        if (std::abs(apq) <= tol * std::sqrt(app * aqq)) continue;
        rotated = true;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = a(i, p), y = a(i, q);
          a(i, p) = c * x - s * y;
          a(i, q) = s * x + c * y;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double x = v(i, p), y = v(i, q);
          v(i, p) = c * x - s * y;
          v(i, q) = s * x + c * y;
        }
      }
    }
    if (!rotated) return;
  }
  throw ConvergenceError("svd_small: one-sided Jacobi did not converge in " +
                         std::to_string(max_sweeps) + " sweeps");
}

inline SvdResult svd_tall(Matrix a, double tol, int max_sweeps) {
  const std::size_t m = a.rows(), n = a.cols();
  Matrix v = Matrix::identity(n);
  one_sided_jacobi(a, v, tol, max_sweeps);

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a(i, j) * a(i, j);
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult r;
  r.u = Matrix(m, n);
  r.vt = Matrix(n, n);
  r.s.resize(n);
  const double scale = *std::max_element(sigma.begin(), sigma.end());
  for (std::size_t jj = 0; jj < n; ++jj) {
    const std::size_t j = order[jj];
    r.s[jj] = sigma[j];
    if (sigma[j] > 1e-300 * std::max(1.0, scale)) {
      for (std::size_t i = 0; i < m; ++i) r.u(i, jj) = a(i, j) / sigma[j];
    }
    for (std::size_t i = 0; i < n; ++i) r.vt(jj, i) = v(i, j);
  }
  // Null columns (exactly zero singular values): complete U to an orthonormal
  // set by Gram-Schmidt against the nonzero columns.
  for (std::size_t jj = 0; jj < n; ++jj) {
    if (r.s[jj] > 1e-300 * std::max(1.0, scale)) continue;
    for (std::size_t e = 0; e < m; ++e) {
      std::vector<double> cand(m, 0.0);
      cand[e] = 1.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == jj) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += cand[i] * r.u(i, k);
        for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * r.u(i, k);
      }
      double nrm = 0.0;
      for (double x : cand) nrm += x * x;
      nrm = std::sqrt(nrm);
      if (nrm > 1e-6) {
        for (std::size_t i = 0; i < m; ++i) r.u(i, jj) = cand[i] / nrm;
        break;
      }
    }
  }
  return r;
}

}  // namespace detail

// Thin SVD m = U diag(S) Vt of an arbitrary small matrix. tol is the relative
// off-diagonal threshold for the Jacobi sweeps (default 1e-12); at most 60
// sweeps before a convergence error.
inline SvdResult svd_small(const Matrix& m, double tol = 1e-12, int max_sweeps = 60) {
  if (m.empty()) throw ShapeError("svd_small: empty matrix");
  if (std::min(m.rows(), m.cols()) > 512)
    throw ValueError("svd_small: min(rows, cols) must be <= 512");
  if (m.rows() >= m.cols()) return detail::svd_tall(m, tol, max_sweeps);
  SvdResult t = detail::svd_tall(transpose(m), tol, max_sweeps);
  SvdResult r;
  r.s = std::move(t.s);
  r.u = transpose(t.vt);
  r.vt = transpose(t.u);
  return r;
}

// All eigenvalues of a symmetric matrix, descending, via cyclic Jacobi
// rotations. Input must be symmetric within 1e-9 relative.
inline std::vector<double> sym_eig_small(Matrix a, int max_sweeps = 60) {
  const std::size_t n = a.rows();
  if (n != a.cols()) throw ShapeError("sym_eig_small: matrix not square");
  const double scale = std::max(max_abs(a), 1e-300);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-9 * scale)
        throw ValueError("sym_eig_small: input not symmetric within 1e-9 relative");
  // Symmetrize exactly so rotations keep the matrix symmetric.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = a(j, i) = v;
    }

  const double tol = 1e-14;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off = std::max(off, std::abs(a(i, j)));
    if (off <= tol * scale) break;
    if (sweep == max_sweeps - 1)
      throw ConvergenceError("sym_eig_small: Jacobi did not converge");
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) <= tol * scale) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end(), std::greater<double>());
  return ev;
}

}  // namespace dlrlock
