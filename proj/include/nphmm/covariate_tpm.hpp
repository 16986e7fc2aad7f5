#pragma once

#include "nphmm/transition.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace nphmm {

//! Covariate-dependent t.p.m. via the multinomial logit link:
//! nu_ij = w0_ij + sum_l w_l,ij z_l for i != j, nu_ii = 0, where
//! z = (x - center) / scale are the standardized covariates.
class CovariateTransition
{
public:
  CovariateTransition(int n_states, int n_covariates);

  int n_states() const { return n_states_; }
  int n_covariates() const { return static_cast<int>(slopes_.size()); }

  Eigen::MatrixXd& intercept() { return intercept_; }
  const Eigen::MatrixXd& intercept() const { return intercept_; }
  Eigen::MatrixXd& slope(int l) { return slopes_.at(l); }
  const Eigen::MatrixXd& slope(int l) const { return slopes_.at(l); }

  //! Standardization applied to raw covariates before the linear predictor.
  void set_standardization(Eigen::VectorXd center, Eigen::VectorXd scale);
  const Eigen::VectorXd& center() const { return center_; }
  const Eigen::VectorXd& scale() const { return scale_; }

  Eigen::MatrixXd logits_at(std::span<const double> x) const;
  TransitionMatrix tpm_at(std::span<const double> x) const;

  //! Free parameters: for each off-diagonal (i, j) in row-major order, the
  //! intercept followed by the P slopes.
  std::size_t num_parameters() const;
  void parameters(std::span<double> out) const;
  void set_parameters(std::span<const double> params);

  //! Adds to grad the pullback of dL/dnu at raw covariates x.
  void accumulate_gradient(std::span<const double> x, const Eigen::MatrixXd& grad_nu,
                           std::span<double> grad) const;

private:
  Eigen::VectorXd standardize(std::span<const double> x) const;

  int n_states_;
  Eigen::MatrixXd intercept_;
  std::vector<Eigen::MatrixXd> slopes_;
  Eigen::VectorXd center_;
  Eigen::VectorXd scale_;
};

//! Stationary distribution of tpm_at(x) for every grid point.
std::vector<Eigen::VectorXd> steady_state_curve(const CovariateTransition& transition,
                                                const std::vector<std::vector<double>>& grid);

} // namespace nphmm
