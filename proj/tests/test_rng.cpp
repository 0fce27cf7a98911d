#include <catch2/catch.hpp>

#include <cmath>
#include <set>

#include "amci/rng.hpp"

using namespace amci;

TEST_CASE("identical (seed, stream) reproduces the sequence", "[rng]") {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("distinct streams differ and look independent", "[rng]") {
  RngStream a(42, 1), b(42, 2);
  int matches = 0;
  double corr = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double ua = a.uniform(), ub = b.uniform();
    if (ua == ub) ++matches;
    corr += (ua - 0.5) * (ub - 0.5);
  }
  corr /= n * (1.0 / 12.0);  // normalized by uniform variance
  CHECK(matches == 0);
  CHECK(std::abs(corr) < 5.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("uniform stays inside the open unit interval", "[rng]") {
  RngStream r(1, 1);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("uniform moments", "[rng]") {
  RngStream r(3, 9);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    s += u;
    s2 += u * u;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(mean == Approx(0.5).margin(4.0 / std::sqrt(12.0 * n)));
  CHECK(var == Approx(1.0 / 12.0).margin(0.002));
}

TEST_CASE("fork derives reproducible, distinct children", "[rng]") {
  RngStream parent(5, 100);
  RngStream c1 = parent.fork(1);
  RngStream c2 = parent.fork(2);
  RngStream c1_again = parent.fork(1);
  CHECK(c1.stream_id() != c2.stream_id());
  CHECK(c1.stream_id() == c1_again.stream_id());
  CHECK(c1.next_u64() == c1_again.next_u64());
}

TEST_CASE("structured stream ids do not collide over bench shapes", "[rng]") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t dp = 0; dp < 100; dp += 7)
    for (std::uint64_t n = 0; n < 12; ++n)
      for (std::uint64_t rep = 0; rep < 100; rep += 11)
        for (std::uint64_t est = 0; est < 6; ++est)
          REQUIRE(seen.insert(stream_id(StreamPurpose::replicate, dp, n, rep, est)).second);
}
