#include "nphmm/covariate_tpm.hpp"

#include "nphmm/error.hpp"

#include <cmath>
#include <sstream>

namespace nphmm {

CovariateTransition::CovariateTransition(int n_states, int n_covariates)
  : n_states_(n_states)
  , intercept_(Eigen::MatrixXd::Zero(n_states, n_states))
  , slopes_(static_cast<std::size_t>(std::max(0, n_covariates)), Eigen::MatrixXd::Zero(n_states, n_states))
  , center_(Eigen::VectorXd::Zero(std::max(0, n_covariates)))
  , scale_(Eigen::VectorXd::Ones(std::max(0, n_covariates)))
{
  require(n_states >= 1, "need at least one state");
  require(n_covariates >= 0, "covariate count must be nonnegative");
}

void CovariateTransition::set_standardization(Eigen::VectorXd center, Eigen::VectorXd scale)
{
  if (center.size() != n_covariates() || scale.size() != n_covariates())
    fail(ErrorCode::dimension_mismatch, "standardization length must equal the covariate count");
  for (Eigen::Index l = 0; l < scale.size(); ++l)
    require(std::isfinite(center(l)) && std::isfinite(scale(l)) && scale(l) > 0.0,
            "covariate standardization needs finite center and positive scale");
  center_ = std::move(center);
  scale_ = std::move(scale);
}

Eigen::VectorXd CovariateTransition::standardize(std::span<const double> x) const
{
  if (static_cast<int>(x.size()) != n_covariates())
    fail(ErrorCode::dimension_mismatch, "covariate vector length does not match the model");
  Eigen::VectorXd z(n_covariates());
  for (int l = 0; l < n_covariates(); ++l) {
    require(std::isfinite(x[l]), "covariates must be finite");
    z(l) = (x[l] - center_(l)) / scale_(l);
  }
  return z;
}

Eigen::MatrixXd CovariateTransition::logits_at(std::span<const double> x) const
{
  Eigen::VectorXd z = standardize(x);
  Eigen::MatrixXd nu = intercept_;
  for (int l = 0; l < n_covariates(); ++l)
    nu += z(l) * slopes_[l];
  nu.diagonal().setZero();
  return nu;
}

TransitionMatrix CovariateTransition::tpm_at(std::span<const double> x) const
{
  Eigen::MatrixXd g = softmax_rows_offdiag(logits_at(x));
  for (int i = 0; i < n_states_; ++i)
    g.row(i) /= g.row(i).sum();
  return TransitionMatrix(std::move(g));
}

std::size_t CovariateTransition::num_parameters() const
{
  return static_cast<std::size_t>(n_states_ * (n_states_ - 1) * (1 + n_covariates()));
}

void CovariateTransition::parameters(std::span<double> out) const
{
  if (out.size() != num_parameters())
    fail(ErrorCode::dimension_mismatch, "covariate t.p.m. parameter output has the wrong length");
  std::size_t k = 0;
  for (int i = 0; i < n_states_; ++i)
    for (int j = 0; j < n_states_; ++j) {
      if (i == j)
        continue;
      out[k++] = intercept_(i, j);
      for (int l = 0; l < n_covariates(); ++l)
        out[k++] = slopes_[l](i, j);
    }
}

void CovariateTransition::set_parameters(std::span<const double> params)
{
  if (params.size() != num_parameters())
    fail(ErrorCode::dimension_mismatch, "covariate t.p.m. parameter block has the wrong length");
  std::size_t k = 0;
  for (int i = 0; i < n_states_; ++i)
    for (int j = 0; j < n_states_; ++j) {
      if (i == j)
        continue;
      require(std::isfinite(params[k]), "covariate t.p.m. parameters must be finite");
      intercept_(i, j) = params[k++];
      for (int l = 0; l < n_covariates(); ++l)
        slopes_[l](i, j) = params[k++];
    }
}

void CovariateTransition::accumulate_gradient(std::span<const double> x, const Eigen::MatrixXd& grad_nu,
                                              std::span<double> grad) const
{
  Eigen::VectorXd z = standardize(x);
  std::size_t k = 0;
  for (int i = 0; i < n_states_; ++i)
    for (int j = 0; j < n_states_; ++j) {
      if (i == j)
        continue;
      grad[k++] += grad_nu(i, j);
      for (int l = 0; l < n_covariates(); ++l)
        grad[k++] += grad_nu(i, j) * z(l);
    }
}

std::vector<Eigen::VectorXd> steady_state_curve(const CovariateTransition& transition,
                                                const std::vector<std::vector<double>>& grid)
{
  std::vector<Eigen::VectorXd> out;
  out.reserve(grid.size());
  for (const auto& x : grid) {
    try {
      out.push_back(stationary_distribution(transition.tpm_at(x)));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::degenerate_chain)
        throw;
      std::ostringstream msg;
      msg << "steady-state curve: degenerate chain at covariates (";
      for (std::size_t l = 0; l < x.size(); ++l)
        msg << (l ? ", " : "") << x[l];
      msg << "): " << e.what();
      fail(ErrorCode::degenerate_chain, msg.str());
    }
  }
  return out;
}

} // namespace nphmm
