#include "nphmm/spline_basis.hpp"

#include "nphmm/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nphmm {

const std::array<std::pair<double, double>, 16>& gauss_legendre16()
{
  static const std::array<std::pair<double, double>, 16> rule = [] {
    constexpr double x[8] = { 0.0950125098376374401853193, 0.2816035507792589132304605,
                              0.4580167776572273863424194, 0.6178762444026437484466718,
                              0.7554044083550030338951012, 0.8656312023878317438804679,
                              0.9445750230732325760779884, 0.9894009349916499325961542 };
    constexpr double w[8] = { 0.1894506104550684962853967, 0.1826034150449235888667637,
                              0.1691565193950025381893121, 0.1495959888165767320815017,
                              0.1246289712555338720524763, 0.0951585116824927848099251,
                              0.0622535239386478928628438, 0.0271524594117540948517806 };
    std::array<std::pair<double, double>, 16> r{};
    for (int i = 0; i < 8; ++i) {
      r[2 * i] = { -x[i], w[i] };
      r[2 * i + 1] = { x[i], w[i] };
    }
    return r;
  }();
  return rule;
}

SplineBasis::SplineBasis(int dimension_index, int num_basis, double support_lo, double support_hi)
  : dimension_index_(dimension_index)
  , num_basis_(num_basis)
  , lo_(support_lo)
  , hi_(support_hi)
{
  require(num_basis >= kOrder,
          "a cubic B-spline basis needs at least 4 functions, got " + std::to_string(num_basis));
  require(std::isfinite(support_lo) && std::isfinite(support_hi),
          "support bounds must be finite");
  require(support_lo < support_hi, "support_lo must be below support_hi");

  // n + 4 knots: lo repeated 4x, n - 4 interior knots, hi repeated 4x.
  const int intervals = num_basis - kOrder + 1;
  const double width = (hi_ - lo_) / intervals;
  knots_.reserve(num_basis + kOrder);
  for (int i = 0; i < kOrder - 1; ++i)
    knots_.push_back(lo_);
  for (int i = 0; i <= intervals; ++i)
    knots_.push_back(i == intervals ? hi_ : lo_ + i * width);
  for (int i = 0; i < kOrder - 1; ++i)
    knots_.push_back(hi_);

  // Normalization by quadrature over each knot span (exact for cubics).
  std::vector<double> integral(num_basis_, 0.0);
  for (auto [x, w] : quadrature_rule()) {
    Local l = eval_local(x, false);
    for (int k = 0; k < kOrder; ++k)
      integral[l.first + k] += w * l.values[k];
  }
  norm_.resize(num_basis_);
  for (int j = 0; j < num_basis_; ++j)
    norm_[j] = 1.0 / integral[j];
}

int SplineBasis::find_span(double x) const
{
  // Span index s with knots_[s] <= x < knots_[s+1], s in [3, n-1]; x == hi
  // belongs to the last span.
  const int intervals = num_basis_ - kOrder + 1;
  const double width = (hi_ - lo_) / intervals;
  int s = static_cast<int>(std::floor((x - lo_) / width));
  s = std::clamp(s, 0, intervals - 1) + kOrder - 1;
  // Correct for rounding in the division.
  while (s > kOrder - 1 && x < knots_[s])
    --s;
  while (s < num_basis_ - 1 && x >= knots_[s + 1])
    ++s;
  return s;
}

SplineBasis::Local SplineBasis::eval_local(double x, bool normalized) const
{
  require(std::isfinite(x), "basis evaluation point must be finite");
  Local out;
  if (!contains(x))
    return out;
  const int s = find_span(x);
  const double* t = knots_.data();

  // Cox-de Boor triangular scheme for the four nonzero functions.
  std::array<double, kOrder> n{};
  std::array<double, kOrder> left{};
  std::array<double, kOrder> right{};
  n[0] = 1.0;
  for (int j = 1; j < kOrder; ++j) {
    left[j] = x - t[s + 1 - j];
    right[j] = t[s + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    n[j] = saved;
  }

  out.first = s - (kOrder - 1);
  out.inside = true;
  for (int k = 0; k < kOrder; ++k)
    out.values[k] = normalized ? n[k] * norm_[out.first + k] : n[k];
  return out;
}

std::vector<double> SplineBasis::eval(double x) const
{
  std::vector<double> v(num_basis_, 0.0);
  Local l = eval_local(x, true);
  if (l.inside)
    for (int k = 0; k < kOrder; ++k)
      v[l.first + k] = l.values[k];
  return v;
}

std::vector<double> SplineBasis::eval_unnormalized(double x) const
{
  std::vector<double> v(num_basis_, 0.0);
  Local l = eval_local(x, false);
  if (l.inside)
    for (int k = 0; k < kOrder; ++k)
      v[l.first + k] = l.values[k];
  return v;
}

std::vector<std::pair<double, double>> SplineBasis::quadrature_rule() const
{
  const auto& gl = gauss_legendre16();
  std::vector<std::pair<double, double>> rule;
  rule.reserve(gl.size() * (num_basis_ - kOrder + 1));
  for (int s = kOrder - 1; s < num_basis_; ++s) {
    const double a = knots_[s];
    const double b = knots_[s + 1];
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    for (auto [x, w] : gl)
      rule.emplace_back(mid + half * x, half * w);
  }
  return rule;
}

std::pair<double, double> support_from_data(std::span<const double> values, double margin_fraction)
{
  require(!values.empty(), "cannot derive a support from an empty sample");
  require(margin_fraction >= 0.0 && std::isfinite(margin_fraction),
          "support margin must be a nonnegative fraction");
  auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  double lo = *mn;
  double hi = *mx;
  require(std::isfinite(lo) && std::isfinite(hi), "data contain non-finite values");
  double h = margin_fraction * (hi - lo);
  if (hi - lo <= 0.0)
    h = std::max(1e-6, std::abs(lo) * 1e-3);
  return { lo - h, hi + h };
}

} // namespace nphmm
