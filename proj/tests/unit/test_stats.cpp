#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pawprint/core.hpp"
#include "pawprint/stats.hpp"

using namespace pawprint;

TEST_CASE("worked example b=10, c=2") {
  const auto r = mcnemar({40, 10, 2, 8});
  CHECK(r.chi2 == doctest::Approx(64.0 / 12.0).epsilon(1e-15));
  CHECK(r.p == doctest::Approx(0.0209213).epsilon(1e-5));
  CHECK(std::abs(r.p - 0.02092) < 1e-4);
  CHECK(r.direction == Direction::RowBetter);
  CHECK(arrow(r.direction) == "↑");
}

TEST_CASE("statistic is exact on integer tables") {
  for (std::uint64_t b = 0; b < 40; ++b)
    for (std::uint64_t c = 0; c < 40; ++c) {
      if (b + c == 0) continue;
      const double diff = static_cast<double>(b) - static_cast<double>(c);
      CHECK(mcnemar({0, b, c, 0}).chi2 == diff * diff / static_cast<double>(b + c));
    }
}

TEST_CASE("swapping the models mirrors the result") {
  const auto a = mcnemar({5, 3, 17, 2});
  const auto b = mcnemar({5, 17, 3, 2});
  CHECK(a.chi2 == b.chi2);
  CHECK(a.p == b.p);
  CHECK(a.direction == Direction::ColBetter);
  CHECK(b.direction == Direction::RowBetter);
}

TEST_CASE("no discordant pairs is a tie") {
  const auto r = mcnemar({30, 0, 0, 12});
  CHECK(r.chi2 == 0.0);
  CHECK(r.p == 1.0);
  CHECK(r.direction == Direction::Tie);
  CHECK(arrow(r.direction) == "=");
  const auto even = mcnemar({1, 4, 4, 1});
  CHECK(even.chi2 == 0.0);
  CHECK(even.p == 1.0);
  CHECK(even.direction == Direction::Tie);
}

TEST_CASE("p-value matches the regularized gamma series") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::uint64_t b = rng() % 60, c = rng() % 60;
    const auto r = mcnemar({0, b, c, 0});
    if (r.chi2 > 50) continue;
    CAPTURE(r.chi2);
    CHECK(std::abs(r.p - oracle::chi2_sf_1dof_series(r.chi2)) < 1e-10);
  }
}

TEST_CASE("tallying correctness flags") {
  std::mt19937_64 rng(9);
  std::vector<bool> x(1000), y(1000);
  std::uint64_t a = 0, b = 0, c = 0, d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng() % 3 != 0;
    y[i] = rng() % 2 != 0;
    if (x[i] && y[i]) ++a;
    else if (x[i]) ++b;
    else if (y[i]) ++c;
    else ++d;
  }
  const auto t = correctness_vector(x, y);
  CHECK(t.a == a);
  CHECK(t.b == b);
  CHECK(t.c == c);
  CHECK(t.d == d);
  CHECK(t.total() == 1000);
  y.pop_back();
  try {
    correctness_vector(x, y);
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
}
