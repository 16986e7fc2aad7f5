#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace nphmm {

class TransitionMatrix;
TransitionMatrix unpack_tpm(int n_states, std::span<const double> logits);

//! Row-stochastic N x N matrix, gamma(i, j) = Pr(g_t = j | g_{t-1} = i).
class TransitionMatrix
{
public:
  explicit TransitionMatrix(Eigen::MatrixXd gamma);

  static TransitionMatrix uniform(int n_states);
  //! diag on the diagonal, remaining mass spread uniformly.
  static TransitionMatrix persistent(int n_states, double diag);

  int n_states() const { return static_cast<int>(gamma_.rows()); }
  const Eigen::MatrixXd& matrix() const { return gamma_; }
  double operator()(int i, int j) const { return gamma_(i, j); }

  //! Logits this matrix was unpacked from, if any; pack_tpm returns them
  //! unchanged so that pack(unpack(x)) == x.
  const std::vector<double>& logits() const { return logits_; }

private:
  friend TransitionMatrix unpack_tpm(int n_states, std::span<const double> logits);

  Eigen::MatrixXd gamma_;
  std::vector<double> logits_;
};

//! Throws unless gamma is square, entries in [0, 1] and rows sum to one (1e-12).
void validate_stochastic(const Eigen::MatrixXd& gamma);

//! Solves delta (I - Gamma + U) = 1 (U all ones); requires irreducibility.
class StationarySolver
{
public:
  explicit StationarySolver(const Eigen::MatrixXd& gamma);

  const Eigen::VectorXd& delta() const { return delta_; }

  //! Given dL/d delta, returns dL/d Gamma (entries treated as independent).
  Eigen::MatrixXd pullback(const Eigen::VectorXd& grad_delta) const;

private:
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  Eigen::VectorXd delta_;
};

Eigen::VectorXd stationary_distribution(const TransitionMatrix& gamma);
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& gamma);

//! Row-wise multinomial logit with the diagonal as reference: for each row
//! i, the entries log(gamma_ij / gamma_ii), j != i, in ascending j.
std::vector<double> pack_tpm(const TransitionMatrix& gamma);
TransitionMatrix unpack_tpm(int n_states, std::span<const double> logits);

//! Row softmax of a logit matrix whose diagonal is treated as 0.
Eigen::MatrixXd softmax_rows_offdiag(const Eigen::MatrixXd& nu);

//! Given dL/dGamma, returns dL/dnu (off-diagonal; diagonal entries zero).
Eigen::MatrixXd softmax_rows_pullback(const Eigen::MatrixXd& gamma, const Eigen::MatrixXd& grad_gamma);

} // namespace nphmm
