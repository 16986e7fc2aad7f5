#pragma once

#include <Eigen/Dense>

#include <span>

namespace nphmm {

//! Multivariate normal emission. The covariance is held as its lower
//! Cholesky factor; the unconstrained parameterization stores the mean, then
//! the factor's lower triangle row by row with log-transformed diagonal.
class GaussianEmission
{
public:
  GaussianEmission(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance);

  static GaussianEmission from_parameters(int dim, std::span<const double> params);
  //! From a lower-triangular factor with positive diagonal (upper part ignored).
  static GaussianEmission from_factor(Eigen::VectorXd mean, const Eigen::MatrixXd& lower);
  static std::size_t num_parameters(int dim) { return dim + dim * (dim + 1) / 2; }

  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cholesky_factor() const { return chol_; }
  Eigen::MatrixXd covariance() const { return chol_ * chol_.transpose(); }

  double density(std::span<const double> y) const;
  double log_density(std::span<const double> y) const;

  void parameters(std::span<double> out) const;

  //! grad += weight * d log f(y) / d params.
  void accumulate_log_gradient(std::span<const double> y, double weight,
                               std::span<double> grad) const;

private:
  GaussianEmission() = default;
  void refresh();

  Eigen::VectorXd mean_;
  Eigen::MatrixXd chol_;
  double log_norm_ = 0.0;   // -D/2 log(2 pi) - sum log L_dd
};

} // namespace nphmm
