#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "sonovote/rng.hpp"

using namespace sonovote;

TEST_CASE("splitmix64 matches the published reference sequence", "[rng]") {
  // First three outputs for state 0, from the reference implementation.
  std::uint64_t state = 0;
  CHECK(splitmix64(state) == 0xE220A8397B1DCDAFull);
  CHECK(splitmix64(state) == 0x6E789E6AA1B965F4ull);
  CHECK(splitmix64(state) == 0x06C45D188009454Full);
}

TEST_CASE("fnv1a matches the published test vectors", "[rng]") {
  CHECK(fnv1a("") == 0xCBF29CE484222325ull);
  CHECK(fnv1a("a") == 0xAF63DC4C8601EC8Cull);
  CHECK(fnv1a("foobar") == 0x85944171F73967E8ull);
}

TEST_CASE("mix_seed separates streams and is order-sensitive", "[rng]") {
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK(mix_seed(7, 0) != mix_seed(7, 1));
  CHECK(mix_seed(7, 1, 2) != mix_seed(7, 2, 1));
  CHECK(mix_seed(7, 1) == mix_seed(7, 1));
}

TEST_CASE("DetRng is reproducible from its seed", "[rng]") {
  DetRng a(42), b(42), c(43);
  bool all_equal = true;
  bool any_diff_from_c = false;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t va = a.next_u64();
    all_equal &= va == b.next_u64();
    any_diff_from_c |= va != c.next_u64();
  }
  CHECK(all_equal);
  CHECK(any_diff_from_c);
}

TEST_CASE("uniform stays in the half-open interval", "[rng]") {
  DetRng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.uniform(-2.5, 3.5);
    REQUIRE(v >= -2.5);
    REQUIRE(v < 3.5);
  }
  CHECK(rng.uniform(1.25, 1.25) == 1.25);
}

TEST_CASE("below covers all residues without exceeding the bound", "[rng]") {
  DetRng rng(11);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t v = rng.below(7);
    REQUIRE(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("shuffle produces a reproducible permutation", "[rng]") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  std::vector<int> w = v;

  DetRng a(5);
  a.shuffle(v);
  DetRng b(5);
  b.shuffle(w);
  CHECK(v == w);

  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) REQUIRE(sorted[i] == i);
}

TEST_CASE("normal draws have roughly standard moments", "[rng]") {
  DetRng rng(13);
  const int n = 20000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}
