#pragma once

#include "nphmm/covariate_tpm.hpp"
#include "nphmm/gaussian_emission.hpp"
#include "nphmm/tensor_emission.hpp"
#include "nphmm/transition.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace nphmm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

//! One multivariate time series. Missing time points have missing[t] != 0
//! (their observation row is ignored).
struct Sequence
{
  std::string id;
  Eigen::MatrixXd observations;         // T x D
  std::vector<unsigned char> missing;   // T
  RowMatrix covariates;                 // T x P, P may be 0

  int length() const { return static_cast<int>(observations.rows()); }
  std::span<const double> covariates_at(int t) const;
};

Sequence make_sequence(Eigen::MatrixXd observations, std::string id = {});

struct SequenceSet
{
  int dim = 0;
  int n_covariates = 0;
  std::vector<Sequence> sequences;

  //! Checks shared D/P, lengths >= 1 and consistent missing masks.
  void validate() const;
  std::size_t total_length() const;
  //! All observed rows pooled into one matrix.
  Eigen::MatrixXd pooled_observations() const;
};

using EmissionSet = std::variant<std::vector<TensorEmission>, std::vector<GaussianEmission>>;
using TransitionModel = std::variant<TransitionMatrix, CovariateTransition>;

struct DensityDiagnostics
{
  std::size_t support_escapes = 0;   // observed points with zero density in some state
  std::size_t floored = 0;           // values lifted to the floor
  std::vector<int> zero_times;       // times where every state has zero density
};

class HmmModel
{
public:
  HmmModel(TransitionModel transition, EmissionSet emissions);

  int n_states() const;
  int dim() const;
  bool has_covariates() const { return std::holds_alternative<CovariateTransition>(transition_); }
  bool is_spline() const { return std::holds_alternative<std::vector<TensorEmission>>(emissions_); }

  const TransitionModel& transition() const { return transition_; }
  TransitionModel& transition() { return transition_; }
  const EmissionSet& emissions() const { return emissions_; }
  EmissionSet& emissions() { return emissions_; }

  //! A fixed initial law replaces the default stationary one.
  void set_initial(std::optional<Eigen::VectorXd> delta);
  const std::optional<Eigen::VectorXd>& fixed_initial() const { return fixed_initial_; }

  //! f(y_t | g_t = i) as a T x N matrix; missing rows are all ones. Values
  //! below floor (when floor > 0) are lifted to it.
  Eigen::MatrixXd density_matrix(const Sequence& seq, DensityDiagnostics* diag = nullptr,
                                 double floor = 0.0) const;

  //! Transition matrices used by the sequence: one entry for a homogeneous
  //! chain, else T entries where entry t drives the step t-1 -> t.
  std::vector<Eigen::MatrixXd> transitions(const Sequence& seq) const;

  //! Fixed initial law if set; otherwise stationary distribution of the
  //! (first-time) t.p.m.
  Eigen::VectorXd initial_distribution(const Sequence& seq) const;

  //! State relabeling: new state k is old state perm[k].
  HmmModel permuted(std::span<const int> perm) const;

  double density(int state, std::span<const double> y) const;

private:
  TransitionModel transition_;
  EmissionSet emissions_;
  std::optional<Eigen::VectorXd> fixed_initial_;
};

//! Scaled forward recursion on precomputed densities; -inf if every state
//! has zero density at some time (those times go into zero_times).
double forward_log_likelihood(const Eigen::VectorXd& delta,
                              std::span<const Eigen::MatrixXd> gammas,
                              const Eigen::MatrixXd& dens,
                              std::vector<int>* zero_times = nullptr);

//! Log-space Viterbi, ties broken toward the lower state index. 0-based.
std::vector<int> viterbi_path(const Eigen::VectorXd& delta,
                              std::span<const Eigen::MatrixXd> gammas,
                              const Eigen::MatrixXd& dens);

//! Scaled forward-backward quantities needed for gradients.
struct Posterior
{
  double log_likelihood = 0.0;
  Eigen::MatrixXd state_probs;            // T x N, Pr(g_t = i | y)
  Eigen::VectorXd initial_sensitivity;    // d logL / d delta
  //! Homogeneous: one matrix sum_t xi_t / gamma (d logL / d Gamma).
  //! Inhomogeneous: entry t is xi_t / gamma^(t); entry 0 unused.
  std::vector<Eigen::MatrixXd> gamma_sensitivity;
};

Posterior forward_backward(const Eigen::VectorXd& delta,
                           std::span<const Eigen::MatrixXd> gammas,
                           const Eigen::MatrixXd& dens);

double log_likelihood(const HmmModel& model, const Sequence& seq,
                      DensityDiagnostics* diag = nullptr);
double joint_log_likelihood(const HmmModel& model, const SequenceSet& data,
                            DensityDiagnostics* diag = nullptr);
std::vector<int> viterbi(const HmmModel& model, const Sequence& seq);

} // namespace nphmm
