#include "nphmm/gaussian_emission.hpp"

#include "nphmm/error.hpp"

#include <cmath>
#include <numbers>

namespace nphmm {

GaussianEmission::GaussianEmission(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance)
  : mean_(std::move(mean))
{
  const auto D = mean_.size();
  require(D >= 1, "gaussian emission needs dimension >= 1");
  if (covariance.rows() != D || covariance.cols() != D)
    fail(ErrorCode::dimension_mismatch, "covariance shape does not match the mean");
  require(mean_.allFinite() && covariance.allFinite(), "gaussian parameters must be finite");
  require((covariance - covariance.transpose()).cwiseAbs().maxCoeff() <=
            1e-12 * std::max(1.0, covariance.cwiseAbs().maxCoeff()),
          "covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  require(llt.info() == Eigen::Success, "covariance is not positive definite");
  chol_ = llt.matrixL();
  for (Eigen::Index d = 0; d < D; ++d)
    require(chol_(d, d) > 0.0, "covariance is not positive definite");
  refresh();
}

GaussianEmission GaussianEmission::from_parameters(int dim, std::span<const double> params)
{
  if (params.size() != num_parameters(dim))
    fail(ErrorCode::dimension_mismatch, "gaussian parameter block has the wrong length");
  GaussianEmission g;
  g.mean_.resize(dim);
  g.chol_ = Eigen::MatrixXd::Zero(dim, dim);
  std::size_t k = 0;
  for (int d = 0; d < dim; ++d)
    g.mean_(d) = params[k++];
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c <= r; ++c) {
      const double v = params[k++];
      g.chol_(r, c) = (r == c) ? std::exp(v) : v;
    }
  require(g.mean_.allFinite() && g.chol_.allFinite(), "gaussian parameters must be finite");
  for (int d = 0; d < dim; ++d)
    require(g.chol_(d, d) > 0.0, "covariance factor diagonal underflowed");
  g.refresh();
  return g;
}

GaussianEmission GaussianEmission::from_factor(Eigen::VectorXd mean, const Eigen::MatrixXd& lower)
{
  const auto D = mean.size();
  require(D >= 1, "gaussian emission needs dimension >= 1");
  if (lower.rows() != D || lower.cols() != D)
    fail(ErrorCode::dimension_mismatch, "covariance factor shape does not match the mean");
  GaussianEmission g;
  g.mean_ = std::move(mean);
  g.chol_ = lower.triangularView<Eigen::Lower>();
  require(g.mean_.allFinite() && g.chol_.allFinite(), "gaussian parameters must be finite");
  for (Eigen::Index d = 0; d < D; ++d)
    require(g.chol_(d, d) > 0.0, "covariance factor diagonal must be positive");
  g.refresh();
  return g;
}

void GaussianEmission::refresh()
{
  const double D = static_cast<double>(dim());
  log_norm_ = -0.5 * D * std::log(2.0 * std::numbers::pi) - chol_.diagonal().array().log().sum();
}

void GaussianEmission::parameters(std::span<double> out) const
{
  if (out.size() != num_parameters(dim()))
    fail(ErrorCode::dimension_mismatch, "gaussian parameter output has the wrong length");
  std::size_t k = 0;
  for (int d = 0; d < dim(); ++d)
    out[k++] = mean_(d);
  for (int r = 0; r < dim(); ++r)
    for (int c = 0; c <= r; ++c)
      out[k++] = (r == c) ? std::log(chol_(r, c)) : chol_(r, c);
}

double GaussianEmission::log_density(std::span<const double> y) const
{
  if (static_cast<int>(y.size()) != dim())
    fail(ErrorCode::dimension_mismatch, "gaussian density: observation dimension mismatch");
  Eigen::VectorXd r(dim());
  for (int d = 0; d < dim(); ++d) {
    require(std::isfinite(y[d]), "gaussian density: observation must be finite");
    r(d) = y[d] - mean_(d);
  }
  Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve(r);
  return log_norm_ - 0.5 * z.squaredNorm();
}

double GaussianEmission::density(std::span<const double> y) const
{
  return std::exp(log_density(y));
}

void GaussianEmission::accumulate_log_gradient(std::span<const double> y, double weight,
                                               std::span<double> grad) const
{
  const int D = dim();
  Eigen::VectorXd r(D);
  for (int d = 0; d < D; ++d)
    r(d) = y[d] - mean_(d);
  const auto L = chol_.triangularView<Eigen::Lower>();
  Eigen::VectorXd z = L.solve(r);
  Eigen::VectorXd s = L.transpose().solve(z);   // Sigma^{-1} (y - mu)
  std::size_t k = 0;
  for (int d = 0; d < D; ++d)
    grad[k++] += weight * s(d);
  // d log f / d L = tril(L^{-T} z z^T) - diag(1/L_dd)
  for (int rr = 0; rr < D; ++rr)
    for (int c = 0; c <= rr; ++c) {
      double g = s(rr) * z(c);
      if (rr == c)
        g = (g - 1.0 / chol_(rr, rr)) * chol_(rr, rr);   // chain through exp
      grad[k++] += weight * g;
    }
}

} // namespace nphmm
