#include "fixtures.hpp"
#include "oracles.hpp"

#include "nphmm/error.hpp"
#include "nphmm/tensor_emission.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <doctest.h>

#include <cmath>
#include <random>

using namespace nphmm;

namespace {

// Naive O(n1 n2) double sum.
double naive_density(const TensorEmission& e, double y1, double y2)
{
  auto b1 = e.bases()[0].eval(y1);
  auto b2 = e.bases()[1].eval(y2);
  auto a = e.coefficients();
  const int n2 = e.shape()[1];
  double s = 0.0;
  for (int j = 0; j < e.shape()[0]; ++j)
    for (int k = 0; k < n2; ++k)
      s += a[j * n2 + k] * b1[j] * b2[k];
  return s;
}

// 20-point Gauss rule on every knot cell.
double cell_integral(const TensorEmission& e)
{
  using G = boost::math::quadrature::gauss<double, 20>;
  auto k1 = e.bases()[0].knots();
  auto k2 = e.bases()[1].knots();
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < k1.size(); ++i) {
    if (k1[i + 1] <= k1[i])
      continue;
    for (std::size_t j = 0; j + 1 < k2.size(); ++j) {
      if (k2[j + 1] <= k2[j])
        continue;
      total += G::integrate(
        [&](double x) {
          return G::integrate(
            [&](double y) {
              const double p[2] = { x, y };
              return e.density(p);
            },
            k2[j], k2[j + 1]);
        },
        k1[i], k1[i + 1]);
    }
  }
  return total;
}

} // namespace

TEST_CASE("softmax coefficients")
{
  std::vector<double> zero(81, 0.0);
  for (double a : coefficients_from_beta(zero))
    CHECK(a == doctest::Approx(1.0 / 81).epsilon(1e-15));

  std::vector<double> b{ std::log(3.0), 0.0, 0.0, 0.0 };
  auto a = coefficients_from_beta(b);
  CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));
  for (int i = 1; i < 4; ++i)
    CHECK(a[i] == doctest::Approx(1.0 / 6).epsilon(1e-15));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 3.0);
  std::vector<double> r(81);
  for (auto& v : r)
    v = z(rng);
  auto c = coefficients_from_beta(r);
  auto ref = oracle::softmax_ld(r);
  double sum = 0.0;
  for (int i = 0; i < 81; ++i) {
    CHECK(std::abs(c[i] - static_cast<double>(ref[i])) <= 1e-14);
    CHECK(c[i] > 0.0);
    sum += c[i];
  }
  CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("softmax survives large logits and rejects non-finite ones")
{
  std::vector<double> big{ 0.0, 800.0, -800.0 };
  auto a = coefficients_from_beta(big);
  CHECK(a[1] == doctest::Approx(1.0));
  CHECK(std::isfinite(a[0]));
  std::vector<double> bad{ 0.0, std::nan("") };
  CHECK_THROWS_AS(coefficients_from_beta(bad), Error);
}

TEST_CASE("pinned reference entry")
{
  std::mt19937_64 rng(2);
  TensorEmission e = fixture::random_emission(2, 5, rng);
  CHECK(e.beta()[0] == 0.0);
  CHECK(e.num_free() == 24);
  std::vector<double> full(e.beta().begin(), e.beta().end());
  full[0] = 1.0;
  CHECK_THROWS_AS(e.set_beta(full), Error);
  std::vector<double> free(e.num_free());
  e.free_beta(free);
  TensorEmission f(fixture::unit_bases(2, 5));
  f.set_free_beta(free);
  for (std::size_t i = 0; i < e.num_coefficients(); ++i)
    CHECK(f.coefficients()[i] == e.coefficients()[i]);
}

TEST_CASE("density outside the support is zero")
{
  std::mt19937_64 rng(1);
  TensorEmission e = fixture::random_emission(2, 6, rng);
  const double y[2] = { -0.5, 0.5 };
  CHECK(e.density(y) == 0.0);
  CHECK(e.log_density(y) == doctest::Approx(std::log(1e-300)));
  const double bad[2] = { 0.5, std::nan("") };
  CHECK_THROWS_AS(e.density(bad), Error);
}

TEST_CASE("uniform coefficients against the naive sum")
{
  TensorEmission e(fixture::unit_bases(2, 10));
  auto b = e.bases()[0].eval(0.5);
  double s = 0.0;
  for (double v : b)
    s += v / 10.0;
  const double y[2] = { 0.5, 0.5 };
  CHECK(std::abs(e.density(y) - s * s) <= 1e-12);
  CHECK(std::abs(e.density(y) - naive_density(e, 0.5, 0.5)) <= 1e-12);
}

TEST_CASE("contraction order does not change the density")
{
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.05, 1.05);
  for (int rep = 0; rep < 5; ++rep) {
    TensorEmission e = fixture::random_emission(2, 7 + rep, rng, 2.0);
    for (int i = 0; i < 200; ++i) {
      const double y[2] = { u(rng), u(rng) };
      CHECK(std::abs(e.density(y) - naive_density(e, y[0], y[1])) <= 1e-12);
    }
  }
}

TEST_CASE("densities integrate to one")
{
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 5; ++rep) {
    TensorEmission e = fixture::random_emission(2, 5 + rep, rng, 1.5);
    CHECK(std::abs(cell_integral(e) - 1.0) <= 1e-6);
    CHECK(std::abs(e.integral() - 1.0) <= 1e-6);
  }
  TensorEmission one(std::vector<SplineBasis>{ SplineBasis(1, 6, -1.0, 3.0) });
  CHECK(std::abs(one.integral() - 1.0) <= 1e-10);
  TensorEmission three(std::vector<SplineBasis>{ SplineBasis(1, 4, 0, 1), SplineBasis(2, 5, 0, 2),
                                                 SplineBasis(3, 4, -1, 1) });
  CHECK(std::abs(three.integral() - 1.0) <= 1e-10);
}

TEST_CASE("density grid")
{
  std::mt19937_64 rng(8);
  TensorEmission e = fixture::random_emission(2, 8, rng);
  GridAxis ax[2] = { { 0.1, 0.9, 2 }, { 0.2, 0.7, 2 } };
  auto g = e.density_grid(ax);
  REQUIRE(g.size() == 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double y[2] = { ax[0].at(i), ax[1].at(j) };
      CHECK(g[i * 2 + j] == doctest::Approx(e.density(y)).epsilon(1e-14));
    }

  GridAxis bad[2] = { { 0.0, 1.0, 1 }, { 0.0, 1.0, 5 } };
  CHECK_THROWS_AS(e.density_grid(bad), Error);

  // Midpoint Riemann sum over a 400 x 400 grid.
  const double h = 1.0 / 400;
  GridAxis mid[2] = { { h / 2, 1 - h / 2, 400 }, { h / 2, 1 - h / 2, 400 } };
  double sum = 0.0;
  for (double x : e.density_grid(mid)) {
    CHECK(x >= 0.0);
    sum += x;
  }
  CHECK(std::abs(sum * h * h - 1.0) <= 1e-3);

  GridAxis fine[2] = { { 0.0, 1.0, 400 }, { 0.0, 1.0, 400 } };
  auto v = e.density_grid(fine);
  const double cell = (1.0 / 399) * (1.0 / 399);
  double trap = 0.0;
  for (int i = 0; i < 400; ++i)
    for (int j = 0; j < 400; ++j) {
      const double w = (i == 0 || i == 399 ? 0.5 : 1.0) * (j == 0 || j == 399 ? 0.5 : 1.0);
      trap += w * v[i * 400 + j];
    }
  CHECK(std::abs(trap * cell - 1.0) <= 1e-3);
}

TEST_CASE("uniform coefficients give a reflection-symmetric grid")
{
  TensorEmission e(fixture::unit_bases(2, 9, -1.0, 1.0));
  GridAxis ax[2] = { { -1.0, 1.0, 41 }, { -1.0, 1.0, 41 } };
  auto g = e.density_grid(ax);
  for (int i = 0; i < 41; ++i)
    for (int j = 0; j < 41; ++j) {
      CHECK(std::abs(g[i * 41 + j] - g[(40 - i) * 41 + j]) <= 1e-12);
      CHECK(std::abs(g[i * 41 + j] - g[j * 41 + i]) <= 1e-12);
    }
}

TEST_CASE("log-density gradient matches finite differences")
{
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  for (int rep = 0; rep < 10; ++rep) {
    TensorEmission e = fixture::random_emission(2, 5, rng);
    Eigen::MatrixXd pts(3, 2);
    for (int i = 0; i < 3; ++i)
      pts.row(i) << u(rng), u(rng);
    BasisTable table(e.bases(), pts);
    std::vector<double> sums(e.num_coefficients(), 0.0);
    for (int i = 0; i < 3; ++i)
      e.accumulate_basis(table, i, 1.0 / e.density(table, i), sums);
    std::vector<double> grad(e.num_free(), 0.0);
    e.free_gradient(sums, 3.0, grad);

    std::vector<double> x0(e.num_free());
    e.free_beta(x0);
    auto f = [&](std::span<const double> x) {
      TensorEmission c = e;
      c.set_free_beta(x);
      double s = 0.0;
      for (int i = 0; i < 3; ++i)
        s += std::log(c.density(table, i));
      return s;
    };
    auto fd = oracle::fd_gradient(f, x0);
    CHECK(oracle::relative_error(grad, fd) <= 1e-5);
  }
}
