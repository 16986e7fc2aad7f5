#pragma once

#include "nphmm/estimation.hpp"
#include "nphmm/hmm.hpp"
#include "nphmm/tensor_emission.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nphmm {

using DensityFn = std::function<double(std::span<const double>)>;

//! Trapezoidal quadrature of p log(p / q) over the grid; q is floored at
//! 1e-300 and points with p == 0 contribute nothing.
double kld(const DensityFn& p, const DensityFn& q, std::span<const GridAxis> grid);

//! Largest fraction of agreeing labels over all relabelings of `decoded`.
double decoding_accuracy(std::span<const int> truth, std::span<const int> decoded);

//! Permutation perm (new state k = old state perm[k]) of the decoded labels
//! that maximizes agreement with truth; ties go to the lexicographically
//! first permutation.
std::vector<int> best_alignment(std::span<const int> truth, std::span<const int> decoded, int n_states);

struct DensityCheck
{
  double integral = 0.0;
  double min_value = 0.0;
  bool ok = false;
};

//! Quadrature integral (|1 - integral| <= tol) and nonnegativity on a
//! grid_points^D grid over the support.
DensityCheck check_emission(const TensorEmission& emission, int grid_points = 400, double tol = 1e-6);

enum class CvMode
{
  within_sequence,
  between_sequence
};

const char* to_string(CvMode mode);
CvMode cv_mode_from_string(const std::string& name);

struct CvPlan
{
  CvMode mode = CvMode::within_sequence;
  int n_folds = 10;
  double holdout = 0.1;
  std::vector<std::vector<int>> candidates;
  std::uint64_t seed = 1;
  int fit_restarts = 0;
  bool check_densities = false;

  void validate(const SequenceSet& data) const;
  //! Scalar candidates applied to every dimension.
  static std::vector<std::vector<int>> uniform_candidates(std::span<const int> counts);
};

struct CvRow
{
  std::vector<int> counts;
  double mean_score = 0.0;
  std::vector<double> fold_scores;   // NaN for failed folds
  int failed_folds = 0;
  int nonconverged_folds = 0;
  bool disqualified = false;
};

struct CvResult
{
  std::vector<CvRow> rows;            // in ascending candidate order
  std::size_t selected = 0;
  std::size_t density_check_failures = 0;
  std::size_t density_checks = 0;
  //! Support used for every fit (from all observed data).
  std::vector<std::pair<double, double>> support;
};

//! Folds marked by holding out time points (within-sequence) or whole
//! sequences (between-sequence). Returns fold -> list of (sequence, time)
//! pairs for within mode, or fold -> list of (sequence, -1) for between mode.
std::vector<std::vector<std::pair<int, int>>> make_folds(const SequenceSet& data, const CvPlan& plan);

//! Highest mean score among rows that are not disqualified; rows are in
//! ascending candidate order and ties keep the earlier (smaller) one.
std::size_t select_candidate(std::span<const CvRow> rows);

CvResult cross_validate(const SequenceSet& data, const CvPlan& plan, const ModelConfig& model,
                        const OptimizerConfig& optimizer);

} // namespace nphmm
