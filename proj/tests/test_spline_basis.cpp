#include "oracles.hpp"

#include "nphmm/error.hpp"
#include "nphmm/spline_basis.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace nphmm;

TEST_CASE("partition of unity")
{
  SplineBasis b(1, 10, 0.0, 1.0);
  auto v = b.eval_unnormalized(0.37);
  double s = 0.0;
  for (double x : v)
    s += x;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-15));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    auto w = b.eval_unnormalized(u(rng));
    double t = 0.0;
    for (double x : w)
      t += x;
    worst = std::max(worst, std::abs(t - 1.0));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("normalized basis functions integrate to one")
{
  SplineBasis b(1, 7, -3.0, 3.0);
  auto knots = b.knots();
  for (int j = 0; j < b.size(); ++j) {
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
      if (knots[k + 1] <= knots[k])
        continue;
      total += oracle::adaptive_simpson([&](double x) { return b.eval(x)[j]; }, knots[k], knots[k + 1], 1e-13);
    }
    CHECK(std::abs(total - 1.0) <= 1e-8);
  }
}

TEST_CASE("basis construction rejects bad arguments")
{
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::internal;
  };
  CHECK(code([] { SplineBasis(1, 3, 0.0, 1.0); }) == ErrorCode::invalid_argument);
  CHECK(code([] { SplineBasis(1, 5, 1.0, 0.0); }) == ErrorCode::invalid_argument);
  CHECK(code([] { SplineBasis(1, 5, 0.0, std::numeric_limits<double>::infinity()); }) ==
        ErrorCode::invalid_argument);
  SplineBasis b(1, 5, 0.0, 1.0);
  CHECK(code([&] { b.eval(std::nan("")); }) == ErrorCode::invalid_argument);
}

TEST_CASE("evaluation outside the support is zero")
{
  SplineBasis b(1, 10, 0.0, 1.0);
  for (double x : b.eval(-1.0))
    CHECK(x == 0.0);
  for (double x : b.eval(2.0))
    CHECK(x == 0.0);
}

TEST_CASE("at most four nonzero values")
{
  SplineBasis b(1, 10, 0.0, 1.0);
  auto count = [&](double x) {
    int c = 0;
    for (double v : b.eval(x))
      c += v != 0.0;
    return c;
  };
  CHECK(count(0.5) <= 4);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.1, 1.1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    CHECK(count(x) <= 4);
    for (double v : b.eval(x))
      CHECK(v >= 0.0);
  }
}

TEST_CASE("matches textbook recursion")
{
  SplineBasis b(1, 7, -3.0, 3.0);
  auto v = b.eval(0.0);
  auto ref = oracle::normalized_basis(7, -3.0, 3.0, 0.0);
  for (int j = 0; j < 7; ++j)
    CHECK(std::abs(v[j] - ref[j]) <= 1e-12);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.999, 2.999);
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng);
    auto a = b.eval(x);
    auto r = oracle::normalized_basis(7, -3.0, 3.0, x);
    for (int j = 0; j < 7; ++j)
      CHECK(std::abs(a[j] - r[j]) <= 1e-12);
  }

  auto k = b.knots();
  auto t = oracle::clamped_knots(7, -3.0, 3.0);
  REQUIRE(k.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(k[i] == doctest::Approx(t[i]).epsilon(1e-15));
}

TEST_CASE("reflection symmetry on a symmetric support")
{
  for (int n : { 6, 7, 10 }) {
    SplineBasis b(1, n, -2.0, 2.0);
    std::mt19937_64 rng(n);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 200; ++i) {
      const double x = u(rng);
      auto a = b.eval(x);
      auto r = b.eval(-x);
      for (int j = 0; j < n; ++j)
        CHECK(std::abs(a[j] - r[n - 1 - j]) <= 1e-12);
    }
  }
}

TEST_CASE("support endpoints are inside")
{
  SplineBasis b(1, 8, 0.0, 1.0);
  double s = 0.0;
  for (double v : b.eval_unnormalized(1.0))
    s += v;
  CHECK(s == doctest::Approx(1.0));
  s = 0.0;
  for (double v : b.eval_unnormalized(0.0))
    s += v;
  CHECK(s == doctest::Approx(1.0));
}

TEST_CASE("support from data adds one percent of the range")
{
  std::vector<double> v{ 2.0, 5.0, 12.0 };
  auto [lo, hi] = support_from_data(v);
  CHECK(lo == doctest::Approx(1.9));
  CHECK(hi == doctest::Approx(12.1));
  std::vector<double> empty;
  CHECK_THROWS_AS(support_from_data(empty), Error);
}
