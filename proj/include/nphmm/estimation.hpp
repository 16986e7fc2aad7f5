#pragma once

#include "nphmm/hmm.hpp"
#include "nphmm/optimizer.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nphmm {

enum class EmissionFamily
{
  spline,
  gaussian
};

const char* to_string(EmissionFamily family);
EmissionFamily emission_family_from_string(const std::string& name);

struct ModelConfig
{
  int n_states = 2;
  EmissionFamily family = EmissionFamily::spline;
  //! One entry per dimension, or a single entry applied to every dimension.
  std::vector<int> basis_counts{ 10 };
  double support_margin = 0.01;
  //! Explicit support per dimension; empty means derived from the data.
  std::vector<std::pair<double, double>> support;
  bool use_covariates = false;

  std::vector<int> counts_for(int dim) const;
};

struct OptimizerConfig
{
  double grad_tol = 1e-5;
  double rel_tol = 1e-10;
  int patience = 5;
  int max_iter = 2000;
  int memory = 10;
  int restarts = 5;
  double jitter = 0.25;
  std::uint64_t seed = 1;
  int init_max_iter = 200;
  int kmeans_seedings = 10;
  int kmeans_max_iter = 300;
  int kmeans_retries = 10;
  double init_persistence = 0.9;
  //! Also start spline fits from a Gaussian HMM's state posteriors.
  bool parametric_start = true;

  LbfgsSettings lbfgs() const;
};

//! Location of each parameter block inside the flat unconstrained vector.
struct ParameterLayout
{
  std::size_t transition_size = 0;
  std::vector<std::size_t> state_offset;
  std::vector<std::size_t> state_size;
  std::size_t total = 0;
};

ParameterLayout parameter_layout(const HmmModel& model);
std::vector<double> pack_parameters(const HmmModel& model);
//! Overwrites the model's parameters; the structure (bases, N, P) is kept.
void unpack_parameters(HmmModel& model, std::span<const double> params);

//! Log-likelihood and analytic gradient for a fixed dataset. Spline basis
//! values at the observations are computed once at construction.
class LikelihoodEvaluator
{
public:
  LikelihoodEvaluator(const SequenceSet& data, const HmmModel& structure);

  double value(const HmmModel& model) const;
  //! grad receives d logL / d params in pack_parameters order.
  double value_and_gradient(const HmmModel& model, std::span<double> grad) const;

private:
  double sequence_term(const HmmModel& model, std::size_t m, std::span<double> grad,
                       bool want_grad) const;
  Eigen::MatrixXd densities(const HmmModel& model, std::size_t m) const;

  const SequenceSet& data_;
  // tables_[m][i]: basis table of sequence m under state i's bases
  std::vector<std::vector<BasisTable>> tables_;
};

struct KMeansResult
{
  Eigen::MatrixXd centers;         // k x D
  std::vector<int> assignment;
  double within_ss = 0.0;
};

//! Lloyd's algorithm with k-means++ seeding; best of `seedings` runs.
//! Clusters are ordered by their centers (lexicographically).
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, int seedings, int max_iter,
                    int retries, std::mt19937_64& rng);

std::vector<SplineBasis> make_bases(const SequenceSet& data, const ModelConfig& config);

//! Maximum-likelihood spline density for i.i.d. points, starting at the
//! uniform coefficient tensor (or at `start` when given). Optional
//! per-point weights turn it into a weighted fit.
TensorEmission fit_iid_spline(const Eigen::MatrixXd& points, std::vector<SplineBasis> bases,
                              const LbfgsSettings& settings, double* log_likelihood = nullptr,
                              const TensorEmission* start = nullptr,
                              std::span<const double> weights = {});

//! Starting model: k-means on pooled observations, one emission fitted to
//! each cluster, t.p.m. with diagonal init_persistence.
HmmModel kmeans_init(const SequenceSet& data, const ModelConfig& config,
                     const OptimizerConfig& optimizer);

struct FitReport
{
  double log_likelihood = 0.0;
  int iterations = 0;
  int evaluations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  std::string status;
  std::size_t support_escapes = 0;
  double wall_seconds = 0.0;
  int best_restart = 0;
  std::vector<double> restart_log_likelihoods;   // NaN for failed restarts
  std::vector<int> basis_counts;
};

struct FitResult
{
  HmmModel model;
  FitReport report;
};

//! Single quasi-Newton run from init.
FitResult fit_from(const SequenceSet& data, const HmmModel& init, const OptimizerConfig& optimizer);

//! init plus optimizer.restarts jittered restarts; best final log-likelihood wins.
FitResult fit(const SequenceSet& data, const HmmModel& init, const OptimizerConfig& optimizer);

//! Every start fitted as is, then optimizer.restarts jittered copies cycling
//! through the starts. Ties go to the earlier run.
FitResult fit(const SequenceSet& data, std::span<const HmmModel> inits, const OptimizerConfig& optimizer);

//! Gaussian HMM fitted from k-means; each state's spline is then fitted to
//! all points weighted by that state's posterior probabilities.
HmmModel parametric_start(const SequenceSet& data, const ModelConfig& config,
                          const OptimizerConfig& optimizer);

//! kmeans_init, plus parametric_start for multi-state spline models when enabled.
std::vector<HmmModel> initial_models(const SequenceSet& data, const ModelConfig& config,
                                     const OptimizerConfig& optimizer);

//! initial_models followed by fit.
FitResult fit_model(const SequenceSet& data, const ModelConfig& config,
                    const OptimizerConfig& optimizer);

} // namespace nphmm
