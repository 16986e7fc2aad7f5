#pragma once

#include "nphmm/config.hpp"

#include <functional>
#include <string>
#include <vector>

namespace nphmm {

//! Simulation study: per run, simulate, fit the spline model (basis count
//! chosen by cross-validation when more than one candidate is given) and
//! the Gaussian baseline, then score decoding accuracy and per-state KLD.
struct StudyConfig
{
  ScenarioConfig scenario = ScenarioConfig::default_copula_gamma();
  ModelConfig model;
  OptimizerConfig optimizer;
  CvPlan cv = default_cv();
  bool gaussian_baseline = true;
  int kld_points = 200;
  //! KLD box; empty means the spline support of each run's data.
  std::vector<std::pair<double, double>> kld_bounds;
  int check_points = 400;

  //! Basis counts 7..15, density checks on every fold fit.
  static CvPlan default_cv();
};

StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyConfig& c);

struct StudyFit
{
  int run = 0;
  std::string model;                 // "nonparametric" or "parametric"
  std::vector<int> basis_counts;     // empty for the Gaussian model
  double log_likelihood = 0.0;
  bool converged = false;
  int iterations = 0;
  double accuracy = 0.0;
  std::vector<double> kld;           // per state, after label alignment
  std::vector<double> gamma_diag;
  int density_checks = 0;
  int density_failures = 0;
};

struct StudyCvRow
{
  int run = 0;
  std::vector<int> counts;
  double mean_score = 0.0;
  int failed_folds = 0;
  int nonconverged_folds = 0;
  bool disqualified = false;
  bool selected = false;
};

struct StudySummaryRow
{
  std::string model;
  int runs = 0;
  double mean_accuracy = 0.0;
  std::vector<double> mean_kld;      // per state
  double mean_kld_all = 0.0;
  std::vector<double> mean_gamma_diag;
  int nonconverged = 0;
  int density_checks = 0;
  int density_failures = 0;
};

struct StudyResult
{
  std::vector<StudyFit> fits;        // ordered by (run, model)
  std::vector<StudyCvRow> cv;
  std::vector<StudySummaryRow> summary;

  std::string fits_csv() const;
  std::string cv_csv() const;
  std::string summary_csv() const;
};

using StudyProgress = std::function<void(int run, int total)>;

StudyResult run_study(const StudyConfig& config, const StudyProgress& progress = {});

//! Deterministic CSV formatting of a double (shortest round-trip form).
std::string csv_number(double v);

} // namespace nphmm
