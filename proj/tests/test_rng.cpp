#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "stlsgd/rng.hpp"

using namespace stlsgd;

TEST_CASE("identical keys reproduce the exact same sequence") {
  RngStream a(7, 3, 41);
  RngStream b(7, 3, 41);
  for (int i = 0; i < 64; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("draws are a pure function of the counter, not of value types") {
  // Interleaving unit/gaussian/u64 draws must not desynchronize another
  // stream that burned the same number of raw words.
  RngStream a(1, 2, 3);
  RngStream b(1, 2, 3);
  (void)a.next_unit();      // 1 word
  (void)a.next_gaussian();  // 2 words
  (void)b.next_u64();
  (void)b.next_u64();
  (void)b.next_u64();
  CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("any key component change decorrelates the stream") {
  RngStream base(5, 0, 100);
  RngStream seed(6, 0, 100);
  RngStream stream(5, 1, 100);
  RngStream time(5, 0, 101);
  std::uint64_t v = base.next_u64();
  CHECK(v != seed.next_u64());
  CHECK(v != stream.next_u64());
  CHECK(v != time.next_u64());
}

TEST_CASE("meta streams stay clear of client ids") {
  CHECK(kMetaStream == 0x8000000000000000ULL);
  RngStream client(9, 0, 5);
  RngStream meta(9, kMetaStream, 5);
  CHECK(client.next_u64() != meta.next_u64());
}

TEST_CASE("next_unit stays inside [0, 1) and is roughly uniform") {
  RngStream rng(11, 0, 0);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = rng.next_unit();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // Mean of n uniforms has sd 1/sqrt(12 n); allow 4 sd.
  CHECK(std::abs(sum / n - 0.5) < 4.0 / std::sqrt(12.0 * n));
}

TEST_CASE("next_below respects the bound and hits every residue") {
  RngStream rng(13, 1, 7);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    std::uint64_t v = rng.next_below(7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (int c : counts) {
    CHECK(c > n / 7 - 600);  // ~6 sd of binomial(n, 1/7)
    CHECK(c < n / 7 + 600);
  }
}

TEST_CASE("gaussian draws have unit variance and zero mean") {
  RngStream rng(17, 2, 0);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double g = rng.next_gaussian();
    sum += g;
    sum2 += g * g;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}
