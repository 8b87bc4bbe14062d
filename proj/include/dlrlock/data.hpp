// Dataset loaders: byte-level text corpora, MNIST IDX files, and a synthetic
// Gaussian-blob classification task used when no IDX files are available.
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dlrlock/matrix.hpp"
#include "dlrlock/rng.hpp"

namespace dlrlock {

// Raw bytes as tokens 0..255 with a deterministic train/held-out split: the
// last 10% of the stream is held out.
struct ByteCorpus {
  std::vector<std::uint8_t> bytes;
  std::uint64_t hash = 0;

  std::size_t train_size() const { return bytes.size() - heldout_size(); }
  std::size_t heldout_size() const { return bytes.size() / 10; }

  std::vector<std::size_t> train_tokens() const {
    return std::vector<std::size_t>(bytes.begin(),
                                    bytes.begin() + static_cast<std::ptrdiff_t>(train_size()));
  }
  std::vector<std::size_t> heldout_tokens() const {
    return std::vector<std::size_t>(bytes.begin() + static_cast<std::ptrdiff_t>(train_size()),
                                    bytes.end());
  }

  // One training sequence of seq_len+1 tokens starting at a random offset.
  std::vector<std::size_t> sample_train_window(Rng& rng, std::size_t seq_len) const {
    if (train_size() < seq_len + 2) throw ValueError("corpus too small for sequence length");
    const std::size_t start = rng.below(train_size() - seq_len - 1);
    std::vector<std::size_t> out(seq_len + 1);
    for (std::size_t i = 0; i <= seq_len; ++i) out[i] = bytes[start + i];
    return out;
  }
};

inline ByteCorpus load_byte_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("load_byte_corpus: cannot open " + path);
  ByteCorpus c;
  c.bytes.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  if (c.bytes.empty()) throw FormatError("load_byte_corpus: empty file " + path);
  c.hash = fnv1a64(c.bytes.data(), c.bytes.size());
  return c;
}

// ---------------------------------------------------------------------------
// MNIST IDX

namespace detail {
inline std::uint32_t read_be32(std::istream& is, const std::string& path, std::size_t offset) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is)
    throw FormatError("idx: truncated read at offset " + std::to_string(offset) + " in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}
}  // namespace detail

// Images scaled to [0,1], one flattened image per row.
inline Matrix load_idx_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("load_idx_images: cannot open " + path);
  const std::uint32_t magic = detail::read_be32(is, path, 0);
  if (magic != 2051)
    throw FormatError("load_idx_images: bad magic " + std::to_string(magic) +
                      " at offset 0 (want 2051) in " + path);
  const std::uint32_t n = detail::read_be32(is, path, 4);
  const std::uint32_t rows = detail::read_be32(is, path, 8);
  const std::uint32_t cols = detail::read_be32(is, path, 12);
  Matrix out(n, static_cast<std::size_t>(rows) * cols);
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is)
      throw FormatError("load_idx_images: truncated image data at offset " +
                        std::to_string(16 + std::size_t(i) * buf.size()) + " in " + path);
    for (std::size_t j = 0; j < buf.size(); ++j)
      out(i, j) = static_cast<double>(buf[j]) / 255.0;
  }
  return out;
}

inline std::vector<std::size_t> load_idx_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("load_idx_labels: cannot open " + path);
  const std::uint32_t magic = detail::read_be32(is, path, 0);
  if (magic != 2049)
    throw FormatError("load_idx_labels: bad magic " + std::to_string(magic) +
                      " at offset 0 (want 2049) in " + path);
  const std::uint32_t n = detail::read_be32(is, path, 4);
  std::vector<std::size_t> out(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    char b;
    is.read(&b, 1);
    if (!is)
      throw FormatError("load_idx_labels: truncated at offset " + std::to_string(8 + i) +
                        " in " + path);
    out[i] = static_cast<unsigned char>(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic blobs

struct Classification {
  Matrix x;                        // n x dim
  std::vector<std::size_t> y;     // n labels
  std::size_t classes = 0;
};

// Gaussian blobs: class means scaled so a small MLP separates them without
// the cross-entropy Hessian degenerating to zero.
inline Classification synthetic_blobs(std::size_t classes, std::size_t dim, std::size_t n,
                                      std::uint64_t seed, double mean_scale = 0.12,
                                      double noise = 0.30) {
  Rng mr(seed, 0);
  Matrix means = rng_fill(mr, classes, dim, NormalDist{0.0, mean_scale});
  Rng sr(seed, 1);
  Classification out;
  out.classes = classes;
  out.x = Matrix(n, dim);
  out.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = sr.below(classes);
    out.y[i] = c;
    for (std::size_t j = 0; j < dim; ++j)
      out.x(i, j) = means(c, j) + sr.normal(0.0, noise);
  }
  return out;
}

}  // namespace dlrlock
