// Dense row-major matrix of doubles plus the handful of kernels the rest of
// the library is built on. Summation order in matmul is fixed (row-major
// accumulation) so results are reproducible bit for bit.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlrlock {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};
struct ValueError : std::runtime_error {
  explicit ValueError(const std::string& what) : std::runtime_error(what) {}
};
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};
struct ConvergenceError : std::runtime_error {
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw ShapeError("Matrix: data length does not match rows*cols");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw ShapeError("Matrix: ragged initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

inline bool is_finite(const Matrix& m) {
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!std::isfinite(m.data()[i])) return false;
  return true;
}

// c = a * b with fixed row-major accumulation: for each output row, partials
// accumulate over k in ascending order.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + ")");
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

// a * b^T, the layout-friendly form for x*W^T linear layers.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += ai[k] * bj[k];
      ci[j] = acc;
    }
  }
  return c;
}

// a^T * b; used for weight gradients g^T x.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("operator+: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("operator-: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline Matrix operator*(const Matrix& a, double s) {
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
  return c;
}
inline Matrix operator*(double s, const Matrix& a) { return a * s; }

inline Matrix& operator+=(Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("operator+=: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
  return a;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("hadamard: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
  return c;
}

inline double frob_dot(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("frob_dot: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
  return acc;
}

inline double frob_norm_sq(const Matrix& a) { return frob_dot(a, a); }
inline double frob_norm(const Matrix& a) { return std::sqrt(frob_norm_sq(a)); }

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i]));
  return m;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q)
          c(i * b.rows() + p, j * b.cols() + q) = aij * b(p, q);
    }
  return c;
}

// Column-major vectorization, the convention used by the Kronecker-product
// Hessian blocks. Storage elsewhere stays row-major; conversion is explicit.
inline std::vector<double> vec_cm(const Matrix& m) {
  std::vector<double> v(m.size());
  std::size_t k = 0;
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < m.rows(); ++i) v[k++] = m(i, j);
  return v;
}

inline Matrix unvec_cm(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols) throw ShapeError("unvec_cm: length mismatch");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = v[k++];
  return m;
}

// --------------------------------------------------------------------------
// Binary matrix file format: magic "DLRM", version u32, rows u64, cols u64,
// then rows*cols little-endian 64-bit floats.

inline constexpr std::uint32_t kMatrixFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "matrix serialization assumes a little-endian host");

inline void save_matrix(std::ostream& os, const Matrix& m) {
  os.write("DLRM", 4);
  std::uint32_t ver = kMatrixFormatVersion;
  std::uint64_t r = m.rows(), c = m.cols();
  os.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  os.write(reinterpret_cast<const char*>(&r), sizeof(r));
  os.write(reinterpret_cast<const char*>(&c), sizeof(c));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!os) throw FormatError("save_matrix: write failed");
}

inline Matrix load_matrix(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DLRM", 4) != 0)
    throw FormatError("load_matrix: bad magic, expected DLRM");
  std::uint32_t ver = 0;
  std::uint64_t r = 0, c = 0;
  is.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  is.read(reinterpret_cast<char*>(&r), sizeof(r));
  is.read(reinterpret_cast<char*>(&c), sizeof(c));
  if (!is) throw FormatError("load_matrix: truncated header");
  if (ver != kMatrixFormatVersion)
    throw FormatError("load_matrix: unsupported version " + std::to_string(ver));
  Matrix m(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!is) throw FormatError("load_matrix: truncated payload");
  return m;
}

inline void save_matrix_file(const std::string& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("save_matrix_file: cannot open " + path);
  save_matrix(os, m);
}

inline Matrix load_matrix_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("load_matrix_file: cannot open " + path);
  return load_matrix(is);
}

// FNV-1a, used for content hashes in manifests and cache sidecars.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::uint64_t content_hash(const Matrix& m) {
  std::uint64_t h = fnv1a64(&m, 0);
  std::uint64_t r = m.rows(), c = m.cols();
  h = fnv1a64(&r, sizeof(r), h);
  h = fnv1a64(&c, sizeof(c), h);
  return fnv1a64(m.data(), m.size() * sizeof(double), h);
}

}  // namespace dlrlock
