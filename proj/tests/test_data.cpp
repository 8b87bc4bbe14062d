#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "dlrlock/data.hpp"
#include "test_util.hpp"

using namespace dlrlock;

namespace {

void write_be32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<char*>(b), 4);
}

std::string write_idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t r,
                             std::uint32_t c) {
  const std::string path = "/tmp/dlrlock_test_images.idx";
  std::ofstream os(path, std::ios::binary);
  write_be32(os, magic);
  write_be32(os, n);
  write_be32(os, r);
  write_be32(os, c);
  for (std::uint32_t i = 0; i < n * r * c; ++i) {
    const unsigned char px = static_cast<unsigned char>(i % 256);
    os.write(reinterpret_cast<const char*>(&px), 1);
  }
  return path;
}

}  // namespace

TEST_CASE("idx images: magic 2051 accepted, values scaled to [0,1]") {
  const std::string path = write_idx_images(2051, 3, 4, 4);
  Matrix imgs = load_idx_images(path);
  REQUIRE(imgs.rows() == 3);
  REQUIRE(imgs.cols() == 16);
  REQUIRE(imgs(0, 0) == 0.0);
  REQUIRE(imgs(0, 15) == Catch::Approx(15.0 / 255.0));
  std::remove(path.c_str());
}

TEST_CASE("idx images: wrong magic rejected with offset info") {
  const std::string path = write_idx_images(2052, 1, 2, 2);
  try {
    load_idx_images(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    REQUIRE(std::string(e.what()).find("offset 0") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("idx labels round trip and truncation error") {
  const std::string path = "/tmp/dlrlock_test_labels.idx";
  {
    std::ofstream os(path, std::ios::binary);
    write_be32(os, 2049);
    write_be32(os, 4);
    const unsigned char labels[4] = {7, 0, 9, 3};
    os.write(reinterpret_cast<const char*>(labels), 4);
  }
  auto y = load_idx_labels(path);
  REQUIRE(y == std::vector<std::size_t>{7, 0, 9, 3});

  {
    std::ofstream os(path, std::ios::binary);
    write_be32(os, 2049);
    write_be32(os, 10);
    const unsigned char labels[2] = {1, 2};
    os.write(reinterpret_cast<const char*>(labels), 2);
  }
  REQUIRE_THROWS_AS(load_idx_labels(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("byte corpus splits the last 10 percent as held out") {
  const std::string path = "/tmp/dlrlock_test_corpus.txt";
  {
    std::ofstream os(path, std::ios::binary);
    for (int i = 0; i < 1000; ++i) os.put(static_cast<char>('a' + (i % 26)));
  }
  ByteCorpus c = load_byte_corpus(path);
  REQUIRE(c.bytes.size() == 1000);
  REQUIRE(c.train_size() == 900);
  REQUIRE(c.heldout_size() == 100);
  REQUIRE(c.heldout_tokens().size() == 100);
  REQUIRE(c.train_tokens().front() == static_cast<std::size_t>('a'));

  Rng r(3);
  auto w = c.sample_train_window(r, 16);
  REQUIRE(w.size() == 17);
  for (auto t : w) REQUIRE(t < 256);
  std::remove(path.c_str());
}

TEST_CASE("synthetic blobs deterministic per seed") {
  Classification a = synthetic_blobs(10, 32, 100, 42);
  Classification b = synthetic_blobs(10, 32, 100, 42);
  Classification c = synthetic_blobs(10, 32, 100, 43);
  REQUIRE(testutil::bit_equal(a.x, b.x));
  REQUIRE(a.y == b.y);
  REQUIRE(!testutil::bit_equal(a.x, c.x));
  REQUIRE(a.x.rows() == 100);
  REQUIRE(a.x.cols() == 32);
  for (auto y : a.y) REQUIRE(y < 10);
}
