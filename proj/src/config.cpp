#include "nphmm/config.hpp"

#include "nphmm/error.hpp"

namespace nphmm {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where)
{
  if (!j.is_object())
    fail(ErrorCode::invalid_argument, where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      ok = ok || key == a;
    if (!ok)
      fail(ErrorCode::invalid_argument, where + ": unknown key '" + key + "'");
  }
}

namespace {

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where)
{
  if (!j.contains(key))
    return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::invalid_argument, where + ": key '" + key + "' has the wrong type");
  }
}

std::vector<std::pair<double, double>> read_bounds(const json& j, const std::string& where)
{
  std::vector<std::pair<double, double>> out;
  if (!j.is_array())
    fail(ErrorCode::invalid_argument, where + ": bounds must be a list of [lo, hi] pairs");
  for (const json& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      fail(ErrorCode::invalid_argument, where + ": bounds must be a list of [lo, hi] pairs");
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

json bounds_to_json(const std::vector<std::pair<double, double>>& b)
{
  json out = json::array();
  for (const auto& [lo, hi] : b)
    out.push_back({ lo, hi });
  return out;
}

Eigen::MatrixXd read_matrix(const json& j, const std::string& where)
{
  if (!j.is_array() || j.empty())
    fail(ErrorCode::invalid_argument, where + ": expected a non-empty matrix");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      fail(ErrorCode::invalid_argument, where + ": matrix rows differ in length");
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number())
        fail(ErrorCode::invalid_argument, where + ": matrix entries must be numbers");
      m(i, k) = j[i][k].get<double>();
    }
  }
  return m;
}

json matrix_json(const Eigen::MatrixXd& m)
{
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k)
      r.push_back(m(i, k));
    out.push_back(r);
  }
  return out;
}

} // namespace

ModelConfig model_config_from_json(const json& j, ModelConfig c)
{
  const std::string w = "model";
  check_keys(j, { "n_states", "family", "basis_counts", "support_margin", "support", "use_covariates" }, w);
  read(j, "n_states", c.n_states, w);
  if (j.contains("family"))
    c.family = emission_family_from_string(j.at("family").get<std::string>());
  if (j.contains("basis_counts")) {
    const json& b = j.at("basis_counts");
    if (b.is_number_integer())
      c.basis_counts = { b.get<int>() };
    else
      read(j, "basis_counts", c.basis_counts, w);
  }
  read(j, "support_margin", c.support_margin, w);
  if (j.contains("support"))
    c.support = read_bounds(j.at("support"), w + ".support");
  read(j, "use_covariates", c.use_covariates, w);
  require(c.n_states >= 1, "model: n_states must be >= 1");
  require(!c.basis_counts.empty(), "model: basis_counts must not be empty");
  require(c.support_margin >= 0.0, "model: support_margin must be nonnegative");
  return c;
}

json to_json(const ModelConfig& c)
{
  return { { "n_states", c.n_states },
           { "family", to_string(c.family) },
           { "basis_counts", c.basis_counts },
           { "support_margin", c.support_margin },
           { "support", bounds_to_json(c.support) },
           { "use_covariates", c.use_covariates } };
}

OptimizerConfig optimizer_config_from_json(const json& j, OptimizerConfig c)
{
  const std::string w = "optimizer";
  check_keys(j,
             { "grad_tol", "rel_tol", "patience", "max_iter", "memory", "restarts", "jitter", "seed",
               "init_max_iter", "kmeans_seedings", "kmeans_max_iter", "kmeans_retries", "init_persistence",
               "parametric_start" },
             w);
  read(j, "grad_tol", c.grad_tol, w);
  read(j, "rel_tol", c.rel_tol, w);
  read(j, "patience", c.patience, w);
  read(j, "max_iter", c.max_iter, w);
  read(j, "memory", c.memory, w);
  read(j, "restarts", c.restarts, w);
  read(j, "jitter", c.jitter, w);
  read(j, "seed", c.seed, w);
  read(j, "init_max_iter", c.init_max_iter, w);
  read(j, "kmeans_seedings", c.kmeans_seedings, w);
  read(j, "kmeans_max_iter", c.kmeans_max_iter, w);
  read(j, "kmeans_retries", c.kmeans_retries, w);
  read(j, "init_persistence", c.init_persistence, w);
  read(j, "parametric_start", c.parametric_start, w);
  require(c.grad_tol > 0.0 && c.rel_tol >= 0.0, "optimizer: tolerances must be positive");
  require(c.patience >= 1 && c.max_iter >= 1 && c.memory >= 1, "optimizer: patience, max_iter and memory must be >= 1");
  require(c.restarts >= 0 && c.jitter >= 0.0, "optimizer: restarts and jitter must be nonnegative");
  require(c.init_persistence > 0.0 && c.init_persistence < 1.0, "optimizer: init_persistence must lie in (0, 1)");
  return c;
}

json to_json(const OptimizerConfig& c)
{
  return { { "grad_tol", c.grad_tol },
           { "rel_tol", c.rel_tol },
           { "patience", c.patience },
           { "max_iter", c.max_iter },
           { "memory", c.memory },
           { "restarts", c.restarts },
           { "jitter", c.jitter },
           { "seed", c.seed },
           { "init_max_iter", c.init_max_iter },
           { "kmeans_seedings", c.kmeans_seedings },
           { "kmeans_max_iter", c.kmeans_max_iter },
           { "kmeans_retries", c.kmeans_retries },
           { "init_persistence", c.init_persistence },
           { "parametric_start", c.parametric_start } };
}

CvPlan cv_plan_from_json(const json& j, CvPlan c)
{
  const std::string w = "cv";
  check_keys(j, { "mode", "n_folds", "holdout", "candidates", "seed", "fit_restarts", "check_densities" }, w);
  if (j.contains("mode"))
    c.mode = cv_mode_from_string(j.at("mode").get<std::string>());
  read(j, "n_folds", c.n_folds, w);
  read(j, "holdout", c.holdout, w);
  if (j.contains("candidates")) {
    c.candidates.clear();
    const json& cand = j.at("candidates");
    if (!cand.is_array())
      fail(ErrorCode::invalid_argument, "cv: candidates must be a list");
    for (const json& e : cand) {
      if (e.is_number_integer())
        c.candidates.push_back({ e.get<int>() });
      else if (e.is_array())
        c.candidates.push_back(e.get<std::vector<int>>());
      else
        fail(ErrorCode::invalid_argument, "cv: each candidate is an integer or a list of integers");
    }
  }
  read(j, "seed", c.seed, w);
  read(j, "fit_restarts", c.fit_restarts, w);
  read(j, "check_densities", c.check_densities, w);
  return c;
}

json to_json(const CvPlan& c)
{
  return { { "mode", to_string(c.mode) },
           { "n_folds", c.n_folds },
           { "holdout", c.holdout },
           { "candidates", c.candidates },
           { "seed", c.seed },
           { "fit_restarts", c.fit_restarts },
           { "check_densities", c.check_densities } };
}

ScenarioConfig scenario_from_json(const json& j)
{
  const std::string w = "scenario";
  check_keys(j, { "family", "tpm", "persistence", "n_states", "states", "length", "runs", "seed" }, w);
  ScenarioFamily family = ScenarioFamily::copula_gamma;
  if (j.contains("family"))
    family = scenario_family_from_string(j.at("family").get<std::string>());
  ScenarioConfig c = family == ScenarioFamily::copula_gamma ? ScenarioConfig::default_copula_gamma()
                                                            : ScenarioConfig::default_gaussian();
  if (j.contains("tpm") && j.contains("persistence"))
    fail(ErrorCode::invalid_argument, "scenario: give either tpm or persistence, not both");
  if (j.contains("tpm")) {
    c.tpm = TransitionMatrix(read_matrix(j.at("tpm"), w + ".tpm"));
  } else if (j.contains("persistence")) {
    int n = c.n_states();
    read(j, "n_states", n, w);
    c.tpm = TransitionMatrix::persistent(n, j.at("persistence").get<double>());
  }
  if (j.contains("states")) {
    const json& s = j.at("states");
    if (!s.is_array())
      fail(ErrorCode::invalid_argument, "scenario: states must be a list");
    c.copula.clear();
    c.gaussian.clear();
    for (const json& e : s) {
      if (family == ScenarioFamily::copula_gamma) {
        check_keys(e, { "shape1", "scale1", "shape2", "scale2", "rho" }, w + ".states");
        CopulaGammaSpec spec;
        read(e, "shape1", spec.shape1, w);
        read(e, "scale1", spec.scale1, w);
        read(e, "shape2", spec.shape2, w);
        read(e, "scale2", spec.scale2, w);
        read(e, "rho", spec.rho, w);
        c.copula.push_back(spec);
      } else {
        check_keys(e, { "mean", "covariance" }, w + ".states");
        const auto mean = e.at("mean").get<std::vector<double>>();
        GaussianSpec spec{ Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                           read_matrix(e.at("covariance"), w + ".states.covariance") };
        c.gaussian.push_back(std::move(spec));
      }
    }
  }
  read(j, "length", c.length, w);
  read(j, "runs", c.runs, w);
  read(j, "seed", c.seed, w);
  c.validate();
  return c;
}

json to_json(const ScenarioConfig& c)
{
  json states = json::array();
  if (c.family == ScenarioFamily::copula_gamma) {
    for (const auto& s : c.copula)
      states.push_back({ { "shape1", s.shape1 },
                         { "scale1", s.scale1 },
                         { "shape2", s.shape2 },
                         { "scale2", s.scale2 },
                         { "rho", s.rho } });
  } else {
    for (const auto& s : c.gaussian)
      states.push_back({ { "mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size()) },
                         { "covariance", matrix_json(s.covariance) } });
  }
  return { { "family", to_string(c.family) },
           { "tpm", matrix_json(c.tpm.matrix()) },
           { "states", states },
           { "length", c.length },
           { "runs", c.runs },
           { "seed", c.seed } };
}

GridSpec grid_spec_from_json(const json& j, GridSpec g)
{
  const std::string w = "grid";
  check_keys(j, { "points", "bounds" }, w);
  if (j.contains("points")) {
    const json& p = j.at("points");
    if (p.is_number_integer())
      g.points = { p.get<int>() };
    else
      read(j, "points", g.points, w);
  }
  if (j.contains("bounds"))
    g.bounds = read_bounds(j.at("bounds"), w + ".bounds");
  require(!g.points.empty(), "grid: points must not be empty");
  for (int p : g.points)
    require(p >= 2, "grid: at least 2 points per dimension");
  for (const auto& [lo, hi] : g.bounds)
    require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "grid: bounds must be finite with lo < hi");
  return g;
}

CurveSpec curve_spec_from_json(const json& j)
{
  const std::string w = "curve";
  check_keys(j, { "covariate", "lo", "hi", "points", "fixed" }, w);
  CurveSpec c;
  read(j, "covariate", c.covariate, w);
  read(j, "lo", c.lo, w);
  read(j, "hi", c.hi, w);
  read(j, "points", c.points, w);
  read(j, "fixed", c.fixed, w);
  require(!c.covariate.empty(), "curve: covariate name is required");
  require(std::isfinite(c.lo) && std::isfinite(c.hi) && c.lo < c.hi, "curve: need finite lo < hi");
  require(c.points >= 2, "curve: at least 2 points");
  return c;
}

} // namespace nphmm
