#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

namespace nphmm {

//! Clamped cubic B-spline basis on an equally spaced knot grid, with each
//! basis function rescaled to integrate to one.
class SplineBasis
{
public:
  static constexpr int kOrder = 4;

  //! Values of the (at most) four basis functions that are nonzero at x.
  struct Local
  {
    int first = 0;                  // index of values[0] in the full basis
    std::array<double, kOrder> values{};
    bool inside = false;            // false: x outside the support, values all 0
  };

  SplineBasis(int dimension_index, int num_basis, double support_lo, double support_hi);

  int dimension_index() const { return dimension_index_; }
  int size() const { return num_basis_; }
  double support_lo() const { return lo_; }
  double support_hi() const { return hi_; }
  std::span<const double> knots() const { return knots_; }
  std::span<const double> norm_constants() const { return norm_; }

  bool contains(double x) const { return x >= lo_ && x <= hi_; }

  Local eval_local(double x, bool normalized = true) const;

  //! Full vector of normalized basis values (length size()).
  std::vector<double> eval(double x) const;
  std::vector<double> eval_unnormalized(double x) const;

  //! Gauss-Legendre nodes/weights (16 per knot span) covering the support.
  std::vector<std::pair<double, double>> quadrature_rule() const;

private:
  int find_span(double x) const;

  int dimension_index_;
  int num_basis_;
  double lo_;
  double hi_;
  std::vector<double> knots_;
  std::vector<double> norm_;
};

//! Support bounds [min - h, max + h] with h = margin_fraction * (max - min).
std::pair<double, double> support_from_data(std::span<const double> values,
                                            double margin_fraction = 0.01);

//! 16-point Gauss-Legendre rule on [-1, 1].
const std::array<std::pair<double, double>, 16>& gauss_legendre16();

} // namespace nphmm
