#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dlrlock/jacobi.hpp"
#include "dlrlock/rng.hpp"
#include "test_util.hpp"

using namespace dlrlock;

namespace {

Matrix reconstruct(const SvdResult& r) {
  Matrix us = r.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= r.s[j];
  return matmul(us, r.vt);
}

double orthonormality_defect(const Matrix& u) {
  Matrix g = matmul_tn(u, u);
  return max_abs(g - Matrix::identity(g.rows()));
}

// Power iteration on m^T m, the independent route to the spectral norm.
double spectral_norm_power(const Matrix& m, int iters = 2000) {
  Rng r(7);
  Matrix v = rng_fill(r, m.cols(), 1, NormalDist{0.0, 1.0});
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    Matrix w = matmul_tn(m, matmul(m, v));
    lambda = frob_norm(w);
    if (lambda == 0.0) return 0.0;
    v = w * (1.0 / lambda);
  }
  return std::sqrt(lambda);
}

}  // namespace

TEST_CASE("svd of diag(4,1)") {
  SvdResult r = svd_small(Matrix{{4, 0}, {0, 1}});
  REQUIRE(r.s.size() == 2);
  REQUIRE(r.s[0] == Catch::Approx(4.0).margin(1e-12));
  REQUIRE(r.s[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("svd of identity") {
  SvdResult r = svd_small(Matrix::identity(3));
  for (double s : r.s) REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("svd reconstruction of random 5x3 within 1e-10 relative") {
  Rng rng(11);
  Matrix m = rng_fill(rng, 5, 3, NormalDist{0.0, 1.0});
  SvdResult r = svd_small(m);
  REQUIRE(frob_norm(reconstruct(r) - m) <= 1e-10 * frob_norm(m));
  REQUIRE(orthonormality_defect(r.u) <= 1e-10);
  REQUIRE(orthonormality_defect(transpose(r.vt)) <= 1e-10);
  REQUIRE(std::is_sorted(r.s.rbegin(), r.s.rend()));
}

TEST_CASE("svd handles wide matrices and matches transpose spectrum") {
  Rng rng(12);
  Matrix m = rng_fill(rng, 3, 7, NormalDist{0.0, 1.0});
  SvdResult a = svd_small(m);
  SvdResult b = svd_small(transpose(m));
  REQUIRE(a.s.size() == b.s.size());
  for (std::size_t i = 0; i < a.s.size(); ++i)
    REQUIRE(std::abs(a.s[i] - b.s[i]) <= 1e-10 * std::max(1.0, a.s[0]));
  REQUIRE(frob_norm(reconstruct(a) - m) <= 1e-10 * frob_norm(m));
}

TEST_CASE("eigenvalues of diag(1,2,3) descending") {
  auto ev = sym_eig_small(Matrix{{1, 0, 0}, {0, 2, 0}, {0, 0, 3}});
  REQUIRE(ev.size() == 3);
  REQUIRE(ev[0] == Catch::Approx(3.0).margin(1e-12));
  REQUIRE(ev[1] == Catch::Approx(2.0).margin(1e-12));
  REQUIRE(ev[2] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("eigenvalues of [[2,1],[1,2]]") {
  auto ev = sym_eig_small(Matrix{{2, 1}, {1, 2}});
  REQUIRE(ev[0] == Catch::Approx(3.0).margin(1e-12));
  REQUIRE(ev[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("eigenvalues of zero matrix are zero") {
  auto ev = sym_eig_small(Matrix(4, 4));
  for (double v : ev) REQUIRE(v == 0.0);
}

TEST_CASE("asymmetric input rejected") {
  REQUIRE_THROWS_AS(sym_eig_small(Matrix{{1, 2}, {0, 1}}), ValueError);
}

TEST_CASE("eigenvalue sum matches trace within 1e-9 relative") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix a = rng_fill(rng, 6, 6, NormalDist{0.0, 1.0});
    Matrix s = (a + transpose(a)) * 0.5;
    auto ev = sym_eig_small(s);
    double sum = 0.0, tr = 0.0;
    for (double v : ev) sum += v;
    for (std::size_t i = 0; i < 6; ++i) tr += s(i, i);
    REQUIRE(std::abs(sum - tr) <= 1e-9 * std::max(1.0, std::abs(tr)));
  }
}

TEST_CASE("max abs eigenvalue equals power-iteration spectral norm") {
  Rng rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix a = rng_fill(rng, 5, 5, NormalDist{0.0, 1.0});
    Matrix s = (a + transpose(a)) * 0.5;
    auto ev = sym_eig_small(s);
    double mx = 0.0;
    for (double v : ev) mx = std::max(mx, std::abs(v));
    const double pw = spectral_norm_power(s);
    REQUIRE(std::abs(mx - pw) <= 1e-8 * std::max(1.0, pw));
  }
}

TEST_CASE("svd size limit enforced") {
  REQUIRE_THROWS_AS(svd_small(Matrix(600, 600)), ValueError);
}
