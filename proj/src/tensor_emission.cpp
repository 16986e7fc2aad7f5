#include "nphmm/tensor_emission.hpp"

#include "nphmm/error.hpp"

#include <algorithm>
#include <cmath>

namespace nphmm {

namespace {

constexpr int kOrder = SplineBasis::kOrder;

} // namespace

BasisTable::BasisTable(std::span<const SplineBasis> bases,
                       const Eigen::MatrixXd& points,
                       const std::vector<unsigned char>* skip)
  : dim_(static_cast<int>(bases.size()))
{
  if (points.cols() != dim_)
    fail(ErrorCode::dimension_mismatch, "basis table: point dimension does not match bases");
  const std::size_t n = static_cast<std::size_t>(points.rows());
  inside_.assign(n, 0);
  first_.assign(n * dim_, 0);
  values_.assign(n * dim_ * kOrder, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (skip && (*skip)[i])
      continue;
    bool in = true;
    for (int d = 0; d < dim_ && in; ++d) {
      const double x = points(static_cast<Eigen::Index>(i), d);
      if (!std::isfinite(x))
        fail(ErrorCode::invalid_argument, "basis table: non-finite observation");
      SplineBasis::Local l = bases[d].eval_local(x);
      if (!l.inside) {
        in = false;
        break;
      }
      first_[i * dim_ + d] = l.first;
      std::copy(l.values.begin(), l.values.end(), values_.begin() + (i * dim_ + d) * kOrder);
    }
    inside_[i] = in ? 1 : 0;
  }
}

std::vector<double> coefficients_from_beta(std::span<const double> beta)
{
  require(!beta.empty(), "coefficient tensor must not be empty");
  double mx = -INFINITY;
  for (double b : beta) {
    require(std::isfinite(b), "beta entries must be finite");
    mx = std::max(mx, b);
  }
  std::vector<double> a(beta.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < beta.size(); ++k) {
    a[k] = std::exp(beta[k] - mx);
    sum += a[k];
  }
  for (double& v : a)
    v /= sum;
  return a;
}

TensorEmission::TensorEmission(std::vector<SplineBasis> bases)
  : bases_(std::move(bases))
{
  require(!bases_.empty(), "tensor emission needs at least one dimension");
  shape_.resize(bases_.size());
  stride_.resize(bases_.size());
  std::size_t total = 1;
  for (std::size_t d = bases_.size(); d-- > 0;) {
    shape_[d] = bases_[d].size();
    stride_[d] = total;
    total *= static_cast<std::size_t>(shape_[d]);
  }
  beta_.assign(total, 0.0);
  coef_ = coefficients_from_beta(beta_);
}

TensorEmission::TensorEmission(std::vector<SplineBasis> bases, std::vector<double> beta)
  : TensorEmission(std::move(bases))
{
  set_beta(beta);
}

void TensorEmission::set_beta(std::span<const double> beta)
{
  if (beta.size() != beta_.size())
    fail(ErrorCode::dimension_mismatch, "beta tensor has the wrong number of entries");
  require(beta[0] == 0.0, "the reference entry beta[0] must be 0");
  coef_ = coefficients_from_beta(beta);
  beta_.assign(beta.begin(), beta.end());
}

void TensorEmission::set_free_beta(std::span<const double> free)
{
  if (free.size() != num_free())
    fail(ErrorCode::dimension_mismatch, "free beta vector has the wrong length");
  std::vector<double> full(beta_.size());
  full[0] = 0.0;
  std::copy(free.begin(), free.end(), full.begin() + 1);
  coef_ = coefficients_from_beta(full);
  beta_ = std::move(full);
}

void TensorEmission::free_beta(std::span<double> out) const
{
  if (out.size() != num_free())
    fail(ErrorCode::dimension_mismatch, "free beta output has the wrong length");
  std::copy(beta_.begin() + 1, beta_.end(), out.begin());
}

double TensorEmission::density(const BasisTable& table, std::size_t i) const
{
  if (!table.inside(i))
    return 0.0;
  const int D = dim();
  const int* first = table.first(i);
  const double* vals = table.values(i);
  if (D == 2) {
    double sum = 0.0;
    const std::size_t s0 = stride_[0];
    for (int k0 = 0; k0 < kOrder; ++k0) {
      const double* row = coef_.data() + (first[0] + k0) * s0 + first[1];
      double inner = 0.0;
      for (int k1 = 0; k1 < kOrder; ++k1)
        inner += row[k1] * vals[kOrder + k1];
      sum += vals[k0] * inner;
    }
    return sum;
  }
  const int combos = 1 << (2 * D);
  double sum = 0.0;
  for (int c = 0; c < combos; ++c) {
    int rem = c;
    std::size_t idx = 0;
    double w = 1.0;
    for (int d = D - 1; d >= 0; --d) {
      const int k = rem & 3;
      rem >>= 2;
      idx += static_cast<std::size_t>(first[d] + k) * stride_[d];
      w *= vals[d * kOrder + k];
    }
    sum += coef_[idx] * w;
  }
  return sum;
}

double TensorEmission::density(std::span<const double> y) const
{
  if (static_cast<int>(y.size()) != dim())
    fail(ErrorCode::dimension_mismatch, "density: observation dimension does not match emission");
  Eigen::MatrixXd p(1, dim());
  for (int d = 0; d < dim(); ++d)
    p(0, d) = y[d];
  for (double v : y)
    require(std::isfinite(v), "density: observation must be finite");
  BasisTable table(bases_, p);
  return density(table, 0);
}

double TensorEmission::log_density(std::span<const double> y) const
{
  return std::log(std::max(density(y), kLogFloor));
}

void TensorEmission::accumulate_basis(const BasisTable& table, std::size_t i, double weight,
                                      std::span<double> acc) const
{
  if (!table.inside(i))
    return;
  const int D = dim();
  const int* first = table.first(i);
  const double* vals = table.values(i);
  if (D == 2) {
    const std::size_t s0 = stride_[0];
    for (int k0 = 0; k0 < kOrder; ++k0) {
      double* row = acc.data() + (first[0] + k0) * s0 + first[1];
      const double w0 = weight * vals[k0];
      for (int k1 = 0; k1 < kOrder; ++k1)
        row[k1] += w0 * vals[kOrder + k1];
    }
    return;
  }
  const int combos = 1 << (2 * D);
  for (int c = 0; c < combos; ++c) {
    int rem = c;
    std::size_t idx = 0;
    double w = weight;
    for (int d = D - 1; d >= 0; --d) {
      const int k = rem & 3;
      rem >>= 2;
      idx += static_cast<std::size_t>(first[d] + k) * stride_[d];
      w *= vals[d * kOrder + k];
    }
    acc[idx] += w;
  }
}

void TensorEmission::free_gradient(std::span<const double> basis_sums, double weight_total,
                                   std::span<double> grad) const
{
  // d/d beta_K  sum_t c_t log f_t = a_K (sum_t c_t B_K(y_t) / f_t - sum_t c_t)
  for (std::size_t k = 1; k < coef_.size(); ++k)
    grad[k - 1] = coef_[k] * (basis_sums[k] - weight_total);
}

std::vector<double> TensorEmission::density_grid(std::span<const GridAxis> grid) const
{
  if (static_cast<int>(grid.size()) != dim())
    fail(ErrorCode::dimension_mismatch, "density grid: one axis per dimension required");
  std::size_t total = 1;
  for (const auto& ax : grid) {
    require(ax.count >= 2, "density grid: each axis needs at least 2 points");
    require(std::isfinite(ax.lo) && std::isfinite(ax.hi) && ax.lo < ax.hi,
            "density grid: axis bounds must be finite with lo < hi");
    total *= static_cast<std::size_t>(ax.count);
  }
  Eigen::MatrixXd points(static_cast<Eigen::Index>(total), dim());
  std::vector<int> idx(dim(), 0);
  for (std::size_t r = 0; r < total; ++r) {
    for (int d = 0; d < dim(); ++d)
      points(static_cast<Eigen::Index>(r), d) = grid[d].at(idx[d]);
    for (int d = dim() - 1; d >= 0; --d) {
      if (++idx[d] < grid[d].count)
        break;
      idx[d] = 0;
    }
  }
  BasisTable table(bases_, points);
  std::vector<double> out(total);
  for (std::size_t r = 0; r < total; ++r)
    out[r] = density(table, r);
  return out;
}

double TensorEmission::integral() const
{
  // Tensor-product Gauss-Legendre over every knot cell; the density is a
  // cubic polynomial per axis inside a cell, so the rule is exact.
  std::vector<std::vector<std::pair<double, double>>> rules(dim());
  std::size_t total = 1;
  for (int d = 0; d < dim(); ++d) {
    rules[d] = bases_[d].quadrature_rule();
    total *= rules[d].size();
  }
  Eigen::MatrixXd points(static_cast<Eigen::Index>(total), dim());
  std::vector<double> weights(total);
  std::vector<std::size_t> idx(dim(), 0);
  for (std::size_t r = 0; r < total; ++r) {
    double w = 1.0;
    for (int d = 0; d < dim(); ++d) {
      points(static_cast<Eigen::Index>(r), d) = rules[d][idx[d]].first;
      w *= rules[d][idx[d]].second;
    }
    weights[r] = w;
    for (int d = dim() - 1; d >= 0; --d) {
      if (++idx[d] < rules[d].size())
        break;
      idx[d] = 0;
    }
  }
  BasisTable table(bases_, points);
  double sum = 0.0;
  for (std::size_t r = 0; r < total; ++r)
    sum += weights[r] * density(table, r);
  return sum;
}

} // namespace nphmm
