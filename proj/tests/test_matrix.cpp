#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <sstream>

#include "dlrlock/matrix.hpp"
#include "test_util.hpp"

using namespace dlrlock;

TEST_CASE("matmul identity is bit-exact") {
  Matrix x{{1.5, -2.25, 3.0}, {0.125, 7.0, -9.5}, {4.0, 0.0, 1.0}};
  Matrix y = matmul(Matrix::identity(3), x);
  REQUIRE(y.same_shape(x));
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y.data()[i] == x.data()[i]);
}

TEST_CASE("matmul hand example") {
  Matrix a{{1, 2}, {3, 4}};
  Matrix b{{0, 1}, {1, 0}};
  Matrix c = matmul(a, b);
  REQUIRE(c(0, 0) == 2.0);
  REQUIRE(c(0, 1) == 1.0);
  REQUIRE(c(1, 0) == 4.0);
  REQUIRE(c(1, 1) == 3.0);
}

TEST_CASE("matmul row of ones times column of ones") {
  const std::size_t k = 17;
  Matrix r(1, k, 1.0), c(k, 1, 1.0);
  Matrix p = matmul(r, c);
  REQUIRE(p.rows() == 1);
  REQUIRE(p.cols() == 1);
  REQUIRE(p(0, 0) == static_cast<double>(k));
}

TEST_CASE("matmul shape mismatch throws") {
  Matrix a(2, 3), b(2, 3);
  REQUIRE_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul_nt and matmul_tn agree with explicit transpose") {
  Matrix a{{1, 2, 3}, {4, 5, 6}};
  Matrix b{{7, 8, 9}, {1, 0, -1}};
  REQUIRE(testutil::max_abs_diff(matmul_nt(a, b), matmul(a, transpose(b))) == 0.0);
  Matrix c{{1, -1}, {2, 0.5}};  // 2x2 for a^T * c with a 2x3
  REQUIRE(testutil::max_abs_diff(matmul_tn(a, c), matmul(transpose(a), c)) == 0.0);
}

TEST_CASE("kron and column-major vec round trip") {
  Matrix a{{1, 2}, {3, 4}};
  Matrix k = kron(a, Matrix::identity(2));
  REQUIRE(k.rows() == 4);
  REQUIRE(k(0, 0) == 1.0);
  REQUIRE(k(1, 1) == 1.0);
  REQUIRE(k(0, 2) == 2.0);
  REQUIRE(k(2, 0) == 3.0);

  auto v = vec_cm(a);
  REQUIRE(v == std::vector<double>{1, 3, 2, 4});
  REQUIRE(testutil::bit_equal(unvec_cm(v, 2, 2), a));
}

TEST_CASE("matrix binary serialization round trip") {
  Matrix m(3, 5);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = 0.25 * static_cast<double>(i) - 2.0;
  std::stringstream ss;
  save_matrix(ss, m);
  Matrix back = load_matrix(ss);
  REQUIRE(testutil::bit_equal(m, back));
}

TEST_CASE("matrix load rejects bad magic and truncation") {
  std::stringstream ss;
  ss.write("NOPE", 4);
  REQUIRE_THROWS_AS(load_matrix(ss), FormatError);

  std::stringstream ss2;
  Matrix m(2, 2, 1.0);
  save_matrix(ss2, m);
  std::string bytes = ss2.str();
  bytes.resize(bytes.size() - 7);
  std::stringstream ss3(bytes);
  REQUIRE_THROWS_AS(load_matrix(ss3), FormatError);
}

TEST_CASE("content hash is order sensitive and stable") {
  Matrix a{{1, 2}, {3, 4}};
  Matrix b{{1, 3}, {2, 4}};
  REQUIRE(content_hash(a) == content_hash(a));
  REQUIRE(content_hash(a) != content_hash(b));
}
