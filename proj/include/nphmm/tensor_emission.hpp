#pragma once

#include "nphmm/spline_basis.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace nphmm {

//! One axis of a Cartesian evaluation grid: count equally spaced points on
//! [lo, hi], endpoints included.
struct GridAxis
{
  double lo = 0.0;
  double hi = 1.0;
  int count = 2;

  double at(int i) const { return lo + (hi - lo) * i / (count - 1); }
};

//! Precomputed local basis values for a fixed set of points. Observation
//! locations do not change during estimation, so the expensive part of
//! density evaluation is done once per dataset.
class BasisTable
{
public:
  BasisTable() = default;

  //! points: n x D; rows flagged in skip are stored as outside.
  BasisTable(std::span<const SplineBasis> bases,
             const Eigen::MatrixXd& points,
             const std::vector<unsigned char>* skip = nullptr);

  std::size_t size() const { return inside_.size(); }
  int dim() const { return dim_; }
  bool inside(std::size_t i) const { return inside_[i] != 0; }
  const int* first(std::size_t i) const { return first_.data() + i * dim_; }
  const double* values(std::size_t i) const
  {
    return values_.data() + i * dim_ * SplineBasis::kOrder;
  }

private:
  int dim_ = 0;
  std::vector<unsigned char> inside_;
  std::vector<int> first_;
  std::vector<double> values_;
};

//! Softmax over a flat tensor, max-shifted before exponentiation.
std::vector<double> coefficients_from_beta(std::span<const double> beta);

//! Per-state emission density: tensor product of normalized cubic B-spline
//! bases with coefficients a = softmax(beta). beta[0] (index (1,...,1)) is
//! the reference entry and is pinned to zero.
class TensorEmission
{
public:
  explicit TensorEmission(std::vector<SplineBasis> bases);
  TensorEmission(std::vector<SplineBasis> bases, std::vector<double> beta);

  int dim() const { return static_cast<int>(bases_.size()); }
  const std::vector<SplineBasis>& bases() const { return bases_; }
  const std::vector<int>& shape() const { return shape_; }
  std::size_t num_coefficients() const { return beta_.size(); }
  std::size_t num_free() const { return beta_.size() - 1; }

  std::span<const double> beta() const { return beta_; }
  std::span<const double> coefficients() const { return coef_; }

  //! Full tensor (row-major, last dimension fastest). beta[0] must be 0.
  void set_beta(std::span<const double> beta);
  //! Everything except the pinned entry.
  void set_free_beta(std::span<const double> free);
  void free_beta(std::span<double> out) const;

  double density(std::span<const double> y) const;
  double density(const BasisTable& table, std::size_t i) const;

  //! log(max(density, 1e-300)).
  double log_density(std::span<const double> y) const;

  //! acc[K] += weight * B_K(y_i) over the local block of point i.
  void accumulate_basis(const BasisTable& table, std::size_t i, double weight,
                        std::span<double> acc) const;

  //! Gradient w.r.t. the free betas of sum_t c_t log f(y_t), given
  //! basis_sums = sum_t (c_t / f(y_t)) B(y_t) and weight_total = sum_t c_t.
  void free_gradient(std::span<const double> basis_sums, double weight_total,
                     std::span<double> grad) const;

  //! Row-major density values on the Cartesian product of the axes.
  std::vector<double> density_grid(std::span<const GridAxis> grid) const;

  //! Gauss-Legendre integral over the support box.
  double integral() const;

  static constexpr double kLogFloor = 1e-300;

private:
  std::vector<SplineBasis> bases_;
  std::vector<int> shape_;
  std::vector<std::size_t> stride_;
  std::vector<double> beta_;
  std::vector<double> coef_;
};

} // namespace nphmm
