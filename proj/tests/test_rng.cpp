#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "dlrlock/rng.hpp"
#include "test_util.hpp"

using namespace dlrlock;

TEST_CASE("rng determinism: same seed and stream give identical matrices") {
  Rng a(1234, 7), b(1234, 7);
  Matrix ma = rng_fill(a, 8, 9, NormalDist{0.0, 1.0});
  Matrix mb = rng_fill(b, 8, 9, NormalDist{0.0, 1.0});
  REQUIRE(testutil::bit_equal(ma, mb));
}

TEST_CASE("rng substreams are order independent") {
  Rng master(99);
  Rng a1 = master.substream("phase1", 3);
  Rng b1 = master.substream("phase1", 0);
  Rng a2 = master.substream("phase1", 3);
  REQUIRE(a1.next_u64() == a2.next_u64());
  REQUIRE(a1.next_u64() == a2.next_u64());
  Rng c1 = master.substream("phase1", 3);
  Rng c2 = master.substream("phase1", 3);
  (void)b1;
  REQUIRE(c1.next_u64() == c2.next_u64());
}

TEST_CASE("rademacher entries are exactly +-1") {
  Rng r(5);
  Matrix m = rng_fill(r, 16, 16, RademacherDist{});
  for (std::size_t i = 0; i < m.size(); ++i)
    REQUIRE((m.data()[i] == 1.0 || m.data()[i] == -1.0));
}

TEST_CASE("normal sample variance matches within 5 percent at 1e6 draws") {
  Rng r(2024);
  const double target_var = 1.0 / 32.0;  // variance 1/r convention
  const std::size_t n = 1000000;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = r.normal(0.0, std::sqrt(target_var));
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  REQUIRE(std::abs(var - target_var) <= 0.05 * target_var);
}

TEST_CASE("distinct streams do not overlap in the first 1e6 draws") {
  Rng master(31337);
  Rng a = master.substream("left");
  Rng b = master.substream("right");
  const std::size_t n = 1000000;
  std::vector<std::uint64_t> va(n), vb(n);
  for (std::size_t i = 0; i < n; ++i) va[i] = a.next_u64();
  for (std::size_t i = 0; i < n; ++i) vb[i] = b.next_u64();
  std::sort(va.begin(), va.end());
  std::sort(vb.begin(), vb.end());
  std::vector<std::uint64_t> inter;
  std::set_intersection(va.begin(), va.end(), vb.begin(), vb.end(), std::back_inserter(inter));
  REQUIRE(inter.empty());
}

TEST_CASE("uniform01 lies in [0,1)") {
  Rng r(8);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("normal rejects non-positive std") {
  Rng r(1);
  REQUIRE_THROWS_AS(r.normal(0.0, 0.0), ValueError);
}
