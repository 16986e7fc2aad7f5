#include "nphmm/simulation.hpp"

#include "nphmm/error.hpp"
#include "nphmm/gaussian_emission.hpp"
#include "nphmm/parallel.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <numbers>

namespace nphmm {

void CopulaGammaSpec::validate() const
{
  require(shape1 > 0 && scale1 > 0 && shape2 > 0 && scale2 > 0,
          "gamma shapes and scales must be positive");
  require(rho > -1.0 && rho < 1.0, "copula correlation must lie in (-1, 1)");
}

void GaussianSpec::validate() const
{
  GaussianEmission(mean, covariance);
}

const char* to_string(ScenarioFamily family)
{
  return family == ScenarioFamily::copula_gamma ? "copula-gamma" : "gaussian";
}

ScenarioFamily scenario_family_from_string(const std::string& name)
{
  if (name == "copula-gamma" || name == "copula_gamma")
    return ScenarioFamily::copula_gamma;
  if (name == "gaussian")
    return ScenarioFamily::gaussian;
  fail(ErrorCode::invalid_argument, "unknown scenario family '" + name + "'");
}

int ScenarioConfig::dim() const
{
  if (family == ScenarioFamily::copula_gamma)
    return 2;
  return gaussian.empty() ? 0 : static_cast<int>(gaussian.front().mean.size());
}

void ScenarioConfig::validate() const
{
  require(length >= 1, "scenario length must be >= 1");
  require(runs >= 1, "scenario runs must be >= 1");
  const std::size_t n = static_cast<std::size_t>(n_states());
  if (family == ScenarioFamily::copula_gamma) {
    require(copula.size() == n, "need one copula-gamma spec per state");
    for (const auto& s : copula)
      s.validate();
  } else {
    require(gaussian.size() == n, "need one gaussian spec per state");
    for (const auto& s : gaussian) {
      s.validate();
      require(s.mean.size() == gaussian.front().mean.size(), "gaussian states differ in dimension");
    }
  }
}

ScenarioConfig ScenarioConfig::default_copula_gamma()
{
  ScenarioConfig c;
  c.family = ScenarioFamily::copula_gamma;
  c.copula = { { 2.5, 1.0, 2.5, 1.0, 0.5 }, { 6.0, 0.8, 6.0, 0.8, -0.4 } };
  return c;
}

ScenarioConfig ScenarioConfig::default_gaussian()
{
  ScenarioConfig c;
  c.family = ScenarioFamily::gaussian;
  GaussianSpec a{ Eigen::Vector2d(-1.0, -1.0), Eigen::Matrix2d{ { 1.0, 0.3 }, { 0.3, 1.0 } } };
  GaussianSpec b{ Eigen::Vector2d(1.0, 1.0), Eigen::Matrix2d{ { 1.0, -0.3 }, { -0.3, 1.0 } } };
  c.gaussian = { a, b };
  return c;
}

std::vector<int> simulate_chain(const TransitionMatrix& gamma, const Eigen::VectorXd& delta, int length,
                                std::mt19937_64& rng)
{
  const int N = gamma.n_states();
  require(length >= 1, "chain length must be >= 1");
  if (delta.size() != N)
    fail(ErrorCode::dimension_mismatch, "initial law length must equal the state count");
  require(delta.allFinite() && delta.minCoeff() >= 0.0 && std::abs(delta.sum() - 1.0) <= 1e-9,
          "initial law must be a probability vector");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto draw = [&](auto&& prob) {
    double u = u01(rng);
    for (int i = 0; i < N - 1; ++i) {
      u -= prob(i);
      if (u < 0.0)
        return i;
    }
    // Guard against rounding: fall back to the last state with positive mass.
    for (int i = N - 1; i > 0; --i)
      if (prob(i) > 0.0)
        return i;
    return 0;
  };
  std::vector<int> path(length);
  path[0] = draw([&](int i) { return delta(i); });
  for (int t = 1; t < length; ++t) {
    const int prev = path[t - 1];
    path[t] = draw([&](int j) { return gamma(prev, j); });
  }
  return path;
}

double gamma_quantile(double shape, double scale, double u)
{
  require(u > 0.0 && u < 1.0, "gamma quantile needs u in (0, 1)");
  require(shape > 0.0 && scale > 0.0 && std::isfinite(shape) && std::isfinite(scale),
          "gamma shape and scale must be positive");
  if (u <= 0.5)
    return scale * boost::math::gamma_p_inv(shape, u);
  return scale * boost::math::gamma_q_inv(shape, 1.0 - u);
}

namespace {

// Gamma quantile at the normal score z, computed from whichever tail is
// smaller so extreme z keep full precision.
double gamma_quantile_at_score(double shape, double scale, double z)
{
  if (z <= 0.0)
    return scale * boost::math::gamma_p_inv(shape, 0.5 * std::erfc(-z / std::numbers::sqrt2));
  return scale * boost::math::gamma_q_inv(shape, 0.5 * std::erfc(z / std::numbers::sqrt2));
}

// Normal score of the gamma CDF at y.
double gamma_score(double shape, double scale, double y)
{
  const double x = y / scale;
  const double p = boost::math::gamma_p(shape, x);
  if (p <= 0.5)
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
  const double q = boost::math::gamma_q(shape, x);
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
}

double gamma_pdf(double shape, double scale, double y)
{
  return boost::math::gamma_p_derivative(shape, y / scale) / scale;
}

} // namespace

std::array<double, 2> sample_copula_gamma(const CopulaGammaSpec& spec, std::mt19937_64& rng)
{
  std::normal_distribution<double> n01(0.0, 1.0);
  const double e1 = n01(rng);
  const double e2 = n01(rng);
  const double z1 = e1;
  const double z2 = spec.rho * e1 + std::sqrt(1.0 - spec.rho * spec.rho) * e2;
  return { gamma_quantile_at_score(spec.shape1, spec.scale1, z1),
           gamma_quantile_at_score(spec.shape2, spec.scale2, z2) };
}

Eigen::VectorXd sample_gaussian(const GaussianSpec& spec, std::mt19937_64& rng)
{
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::LLT<Eigen::MatrixXd> llt(spec.covariance);
  Eigen::VectorXd e(spec.mean.size());
  for (Eigen::Index d = 0; d < e.size(); ++d)
    e(d) = n01(rng);
  return spec.mean + Eigen::MatrixXd(llt.matrixL()) * e;
}

double copula_gamma_density(const CopulaGammaSpec& spec, std::span<const double> y)
{
  require(y.size() == 2, "copula-gamma density is bivariate");
  if (!(y[0] > 0.0) || !(y[1] > 0.0))
    return 0.0;
  const double f1 = gamma_pdf(spec.shape1, spec.scale1, y[0]);
  const double f2 = gamma_pdf(spec.shape2, spec.scale2, y[1]);
  if (!(f1 > 0.0) || !(f2 > 0.0))
    return 0.0;
  const double z1 = gamma_score(spec.shape1, spec.scale1, y[0]);
  const double z2 = gamma_score(spec.shape2, spec.scale2, y[1]);
  if (!std::isfinite(z1) || !std::isfinite(z2))
    return 0.0;
  const double r = spec.rho;
  const double one_m = 1.0 - r * r;
  const double log_c =
    -0.5 * std::log(one_m) - (r * r * (z1 * z1 + z2 * z2) - 2.0 * r * z1 * z2) / (2.0 * one_m);
  return std::exp(log_c) * f1 * f2;
}

double gaussian_spec_density(const GaussianSpec& spec, std::span<const double> y)
{
  return GaussianEmission(spec.mean, spec.covariance).density(y);
}

SimulatedRun simulate_run(const ScenarioConfig& config, int run_index)
{
  config.validate();
  std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(run_index)));
  const Eigen::VectorXd delta = stationary_distribution(config.tpm);
  SimulatedRun out;
  out.states = simulate_chain(config.tpm, delta, config.length, rng);
  const int D = config.dim();
  Eigen::MatrixXd obs(config.length, D);
  for (int t = 0; t < config.length; ++t) {
    const int s = out.states[t];
    if (config.family == ScenarioFamily::copula_gamma) {
      auto y = sample_copula_gamma(config.copula[s], rng);
      obs(t, 0) = y[0];
      obs(t, 1) = y[1];
    } else {
      obs.row(t) = sample_gaussian(config.gaussian[s], rng).transpose();
    }
  }
  out.sequence = make_sequence(std::move(obs), "run" + std::to_string(run_index + 1));
  return out;
}

double scenario_density(const ScenarioConfig& config, int state, std::span<const double> y)
{
  if (config.family == ScenarioFamily::copula_gamma)
    return copula_gamma_density(config.copula.at(state), y);
  return gaussian_spec_density(config.gaussian.at(state), y);
}

} // namespace nphmm
