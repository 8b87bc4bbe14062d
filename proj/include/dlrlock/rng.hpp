// Deterministic splittable RNG: xoshiro256++ seeded through SplitMix64.
// Streams are addressed by (master_seed, purpose tag, index) so that work
// scheduled concurrently draws from disjoint, order-independent sequences.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "dlrlock/matrix.hpp"

namespace dlrlock {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
inline std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
}  // namespace detail

class Rng {
 public:
  Rng() : Rng(0, 0) {}
  explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {
    std::uint64_t x = seed ^ (0x8f462907u + stream_id * 0x9e3779b97f4a7c15ull);
    for (auto& w : s_) w = detail::splitmix64(x);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Derived stream for an independent piece of work. The id is a hash of
  // (master seed, tag, index), so the result does not depend on the order in
  // which substreams are requested.
  Rng substream(const std::string& tag, std::uint64_t index = 0) const {
    std::uint64_t h = fnv1a64(&seed_, sizeof(seed_));
    h = fnv1a64(tag.data(), tag.size(), h);
    h = fnv1a64(&index, sizeof(index), h);
    return Rng(seed_, h);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Box-Muller. Draws two uniforms per pair of normals, caching the spare, so
  // the draw sequence is part of the stream contract.
  double normal(double mean = 0.0, double std_dev = 1.0) {
    if (std_dev <= 0.0) throw ValueError("Rng::normal: std must be > 0");
    if (have_spare_) {
      have_spare_ = false;
      return mean + std_dev * spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mean + std_dev * std::cos(a) * r;
  }

  double rademacher() { return (next_u64() & 1ull) ? 1.0 : -1.0; }

 private:
  std::uint64_t s_[4];
  std::uint64_t seed_ = 0, stream_id_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

struct NormalDist {
  double mean = 0.0, std_dev = 1.0;
};
struct RademacherDist {};
struct UniformDist {};

inline Matrix rng_fill(Rng& rng, std::size_t rows, std::size_t cols, NormalDist d) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(d.mean, d.std_dev);
  return m;
}
inline Matrix rng_fill(Rng& rng, std::size_t rows, std::size_t cols, RademacherDist) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.rademacher();
  return m;
}
inline Matrix rng_fill(Rng& rng, std::size_t rows, std::size_t cols, UniformDist) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform01();
  return m;
}

}  // namespace dlrlock
