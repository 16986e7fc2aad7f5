#pragma once

#include "nphmm/hmm.hpp"
#include "nphmm/transition.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nphmm {

//! Bivariate law with gamma(shape, scale) marginals joined by a Gaussian
//! copula with correlation rho.
struct CopulaGammaSpec
{
  double shape1 = 2.5;
  double scale1 = 1.0;
  double shape2 = 2.5;
  double scale2 = 1.0;
  double rho = 0.0;

  void validate() const;
};

struct GaussianSpec
{
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  void validate() const;
};

enum class ScenarioFamily
{
  copula_gamma,
  gaussian
};

const char* to_string(ScenarioFamily family);
ScenarioFamily scenario_family_from_string(const std::string& name);

struct ScenarioConfig
{
  TransitionMatrix tpm = TransitionMatrix::persistent(2, 0.97);
  ScenarioFamily family = ScenarioFamily::copula_gamma;
  std::vector<CopulaGammaSpec> copula;
  std::vector<GaussianSpec> gaussian;
  int length = 2000;
  int runs = 100;
  std::uint64_t seed = 1;

  int n_states() const { return tpm.n_states(); }
  int dim() const;
  void validate() const;

  //! Overlapping, differently oriented copula-gamma states.
  static ScenarioConfig default_copula_gamma();
  //! Bivariate normals with means (-1,-1), (1,1) and correlations 0.3, -0.3.
  static ScenarioConfig default_gaussian();
};

//! g_1 ~ delta, g_t | g_{t-1} ~ row g_{t-1} of gamma. States are 0-based.
std::vector<int> simulate_chain(const TransitionMatrix& gamma, const Eigen::VectorXd& delta, int length,
                                std::mt19937_64& rng);

std::array<double, 2> sample_copula_gamma(const CopulaGammaSpec& spec, std::mt19937_64& rng);
Eigen::VectorXd sample_gaussian(const GaussianSpec& spec, std::mt19937_64& rng);

double copula_gamma_density(const CopulaGammaSpec& spec, std::span<const double> y);
double gaussian_spec_density(const GaussianSpec& spec, std::span<const double> y);

//! Gamma quantile; u in (0, 1). Accurate in both tails via the complement.
double gamma_quantile(double shape, double scale, double u);

struct SimulatedRun
{
  Sequence sequence;
  std::vector<int> states;
};

//! Run r uses the RNG stream derived from (seed, r).
SimulatedRun simulate_run(const ScenarioConfig& config, int run_index);

//! True emission density of state i.
double scenario_density(const ScenarioConfig& config, int state, std::span<const double> y);

} // namespace nphmm
