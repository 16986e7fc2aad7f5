#include "nphmm/transition.hpp"

#include "nphmm/error.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace nphmm {

void validate_stochastic(const Eigen::MatrixXd& gamma)
{
  require(gamma.rows() >= 1 && gamma.rows() == gamma.cols(), "t.p.m. must be square and non-empty");
  for (Eigen::Index i = 0; i < gamma.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < gamma.cols(); ++j) {
      const double g = gamma(i, j);
      require(std::isfinite(g) && g >= 0.0 && g <= 1.0,
              "t.p.m. entries must lie in [0, 1]");
      row += g;
    }
    require(std::abs(row - 1.0) <= 1e-12,
            "t.p.m. row " + std::to_string(i + 1) + " does not sum to 1");
  }
}

TransitionMatrix::TransitionMatrix(Eigen::MatrixXd gamma)
  : gamma_(std::move(gamma))
{
  validate_stochastic(gamma_);
}

TransitionMatrix TransitionMatrix::uniform(int n_states)
{
  require(n_states >= 1, "need at least one state");
  return TransitionMatrix(Eigen::MatrixXd::Constant(n_states, n_states, 1.0 / n_states));
}

TransitionMatrix TransitionMatrix::persistent(int n_states, double diag)
{
  require(n_states >= 1, "need at least one state");
  if (n_states == 1)
    return TransitionMatrix(Eigen::MatrixXd::Ones(1, 1));
  require(diag > 0.0 && diag < 1.0, "persistence must lie in (0, 1)");
  Eigen::MatrixXd g = Eigen::MatrixXd::Constant(n_states, n_states, (1.0 - diag) / (n_states - 1));
  g.diagonal().setConstant(diag);
  return TransitionMatrix(std::move(g));
}

namespace {

void check_irreducible(const Eigen::MatrixXd& gamma)
{
  const Eigen::Index n = gamma.rows();
  for (Eigen::Index start = 0; start < n; ++start) {
    std::vector<bool> seen(n, false);
    std::vector<Eigen::Index> stack{ start };
    seen[start] = true;
    while (!stack.empty()) {
      Eigen::Index i = stack.back();
      stack.pop_back();
      for (Eigen::Index j = 0; j < n; ++j)
        if (!seen[j] && gamma(i, j) > 0.0) {
          seen[j] = true;
          stack.push_back(j);
        }
    }
    std::ostringstream missing;
    bool any = false;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!seen[j]) {
        missing << (any ? ", " : "") << j + 1;
        any = true;
      }
    if (any)
      fail(ErrorCode::degenerate_chain,
           "reducible chain: state(s) " + missing.str() + " unreachable from state " +
             std::to_string(start + 1));
  }
}

} // namespace

StationarySolver::StationarySolver(const Eigen::MatrixXd& gamma)
{
  validate_stochastic(gamma);
  check_irreducible(gamma);
  const Eigen::Index n = gamma.rows();
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - gamma + Eigen::MatrixXd::Ones(n, n);
  lu_.compute(m);
  // delta M = 1'  <=>  M' delta' = 1
  delta_ = lu_.transpose().solve(Eigen::VectorXd::Ones(n));
  if (!delta_.allFinite())
    fail(ErrorCode::degenerate_chain, "stationary system is singular");
  for (Eigen::Index i = 0; i < n; ++i)
    delta_(i) = std::max(0.0, delta_(i));
  delta_ /= delta_.sum();
}

Eigen::MatrixXd StationarySolver::pullback(const Eigen::VectorXd& grad_delta) const
{
  // d delta = delta dGamma M^{-1}  =>  dL/dGamma_ij = delta_i (M^{-1} g)_j
  Eigen::VectorXd w = lu_.solve(grad_delta);
  return delta_ * w.transpose();
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& gamma)
{
  return StationarySolver(gamma).delta();
}

Eigen::VectorXd stationary_distribution(const TransitionMatrix& gamma)
{
  return StationarySolver(gamma.matrix()).delta();
}

std::vector<double> pack_tpm(const TransitionMatrix& gamma)
{
  if (!gamma.logits().empty())
    return gamma.logits();
  const int n = gamma.n_states();
  std::vector<double> out;
  out.reserve(n * (n - 1));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j)
        continue;
      require(gamma(i, j) > 0.0 && gamma(i, i) > 0.0,
              "pack_tpm: all probabilities must be strictly positive");
      out.push_back(std::log(gamma(i, j) / gamma(i, i)));
    }
  return out;
}

Eigen::MatrixXd softmax_rows_offdiag(const Eigen::MatrixXd& nu)
{
  const Eigen::Index n = nu.rows();
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i)
        mx = std::max(mx, nu(i, j));
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      g(i, j) = std::exp((j == i ? 0.0 : nu(i, j)) - mx);
      sum += g(i, j);
    }
    g.row(i) /= sum;
  }
  return g;
}

Eigen::MatrixXd softmax_rows_pullback(const Eigen::MatrixXd& gamma, const Eigen::MatrixXd& grad_gamma)
{
  const Eigen::Index n = gamma.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = gamma.row(i).dot(grad_gamma.row(i));
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i)
        out(i, j) = gamma(i, j) * (grad_gamma(i, j) - mean);
  }
  return out;
}

TransitionMatrix unpack_tpm(int n_states, std::span<const double> logits)
{
  require(n_states >= 1, "need at least one state");
  if (logits.size() != static_cast<std::size_t>(n_states * (n_states - 1)))
    fail(ErrorCode::dimension_mismatch, "t.p.m. logit block has the wrong length");
  Eigen::MatrixXd nu = Eigen::MatrixXd::Zero(n_states, n_states);
  std::size_t k = 0;
  for (int i = 0; i < n_states; ++i)
    for (int j = 0; j < n_states; ++j)
      if (i != j) {
        require(std::isfinite(logits[k]), "t.p.m. logits must be finite");
        nu(i, j) = logits[k++];
      }
  Eigen::MatrixXd g = softmax_rows_offdiag(nu);
  // Renormalize rows so the 1e-12 row-sum invariant holds after rounding.
  for (int i = 0; i < n_states; ++i)
    g.row(i) /= g.row(i).sum();
  TransitionMatrix out(std::move(g));
  out.logits_.assign(logits.begin(), logits.end());
  return out;
}

} // namespace nphmm
