#include "nphmm/study.hpp"

#include "nphmm/error.hpp"
#include "nphmm/parallel.hpp"

#include <cmath>
#include <optional>
#include <sstream>

namespace nphmm {

using nlohmann::json;

std::string csv_number(double v)
{
  if (std::isnan(v))
    return "nan";
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

namespace {

std::vector<std::vector<int>> default_candidates()
{
  std::vector<int> c;
  for (int n = 7; n <= 15; ++n)
    c.push_back(n);
  return CvPlan::uniform_candidates(c);
}

std::string counts_label(const std::vector<int>& counts)
{
  std::string out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (i)
      out += 'x';
    out += std::to_string(counts[i]);
  }
  return out;
}

std::vector<double> tpm_diagonal(const HmmModel& model)
{
  std::vector<double> out;
  if (const auto* tm = std::get_if<TransitionMatrix>(&model.transition()))
    for (int i = 0; i < tm->n_states(); ++i)
      out.push_back(tm->matrix()(i, i));
  return out;
}

StudyFit score_fit(const StudyConfig& cfg, int run, const SimulatedRun& sim, const FitResult& fr,
                   const std::string& label, std::span<const GridAxis> kld_grid)
{
  StudyFit out;
  out.run = run;
  out.model = label;
  out.basis_counts = fr.report.basis_counts;
  out.log_likelihood = fr.report.log_likelihood;
  out.converged = fr.report.converged;
  out.iterations = fr.report.iterations;

  const int N = fr.model.n_states();
  const std::vector<int> decoded = viterbi(fr.model, sim.sequence);
  out.accuracy = decoding_accuracy(sim.states, decoded);
  const std::vector<int> perm = best_alignment(sim.states, decoded, N);
  const HmmModel aligned = fr.model.permuted(perm);
  out.gamma_diag = tpm_diagonal(aligned);

  for (int i = 0; i < N; ++i) {
    DensityFn truth = [&](std::span<const double> y) { return scenario_density(cfg.scenario, i, y); };
    DensityFn fitted = [&](std::span<const double> y) { return aligned.density(i, y); };
    out.kld.push_back(kld(truth, fitted, kld_grid));
  }
  if (const auto* spl = std::get_if<std::vector<TensorEmission>>(&aligned.emissions()))
    for (const auto& e : *spl) {
      ++out.density_checks;
      if (!check_emission(e, cfg.check_points).ok)
        ++out.density_failures;
    }
  return out;
}

struct RunOutput
{
  std::vector<StudyFit> fits;
  std::vector<StudyCvRow> cv;
  int cv_checks = 0;
  int cv_failures = 0;
};

RunOutput study_run(const StudyConfig& cfg, int run)
{
  RunOutput out;
  const SimulatedRun sim = simulate_run(cfg.scenario, run);
  SequenceSet data;
  data.dim = cfg.scenario.dim();
  data.n_covariates = 0;
  data.sequences.push_back(sim.sequence);

  ModelConfig spline = cfg.model;
  spline.family = EmissionFamily::spline;
  spline.use_covariates = false;
  if (spline.support.empty()) {
    Eigen::MatrixXd pooled = data.pooled_observations();
    for (int d = 0; d < data.dim; ++d) {
      std::vector<double> col(pooled.col(d).data(), pooled.col(d).data() + pooled.rows());
      spline.support.push_back(support_from_data(col, spline.support_margin));
    }
  }

  std::vector<GridAxis> grid;
  const auto& box = cfg.kld_bounds.empty() ? spline.support : cfg.kld_bounds;
  for (const auto& [lo, hi] : box)
    grid.push_back({ lo, hi, cfg.kld_points });

  OptimizerConfig opt = cfg.optimizer;
  opt.seed = derive_seed(cfg.optimizer.seed, static_cast<std::uint64_t>(run));

  if (cfg.cv.candidates.size() > 1) {
    CvPlan plan = cfg.cv;
    plan.seed = derive_seed(cfg.cv.seed, static_cast<std::uint64_t>(run));
    const CvResult cv = cross_validate(data, plan, spline, opt);
    for (std::size_t c = 0; c < cv.rows.size(); ++c) {
      const CvRow& r = cv.rows[c];
      out.cv.push_back({ run, r.counts, r.mean_score, r.failed_folds, r.nonconverged_folds, r.disqualified,
                         c == cv.selected });
    }
    out.cv_checks = static_cast<int>(cv.density_checks);
    out.cv_failures = static_cast<int>(cv.density_check_failures);
    spline.basis_counts = cv.rows[cv.selected].counts;
  } else if (cfg.cv.candidates.size() == 1) {
    spline.basis_counts = cfg.cv.candidates.front();
  }

  out.fits.push_back(score_fit(cfg, run, sim, fit_model(data, spline, opt), "nonparametric", grid));
  if (cfg.gaussian_baseline) {
    ModelConfig gauss = spline;
    gauss.family = EmissionFamily::gaussian;
    out.fits.push_back(score_fit(cfg, run, sim, fit_model(data, gauss, opt), "parametric", grid));
  }
  return out;
}

} // namespace

CvPlan StudyConfig::default_cv()
{
  CvPlan plan;
  plan.candidates = default_candidates();
  plan.check_densities = true;
  return plan;
}

StudyConfig study_config_from_json(const json& j)
{
  check_keys(j,
             { "scenario", "model", "optimizer", "cv", "gaussian_baseline", "kld_points", "kld_bounds",
               "check_points" },
             "study");
  StudyConfig c;
  if (j.contains("scenario"))
    c.scenario = scenario_from_json(j.at("scenario"));
  if (j.contains("model"))
    c.model = model_config_from_json(j.at("model"), c.model);
  if (j.contains("optimizer"))
    c.optimizer = optimizer_config_from_json(j.at("optimizer"), c.optimizer);
  if (j.contains("cv"))
    c.cv = cv_plan_from_json(j.at("cv"), c.cv);
  c.gaussian_baseline = j.value("gaussian_baseline", c.gaussian_baseline);
  c.kld_points = j.value("kld_points", c.kld_points);
  c.check_points = j.value("check_points", c.check_points);
  if (j.contains("kld_bounds"))
    for (const json& p : j.at("kld_bounds")) {
      if (!p.is_array() || p.size() != 2)
        fail(ErrorCode::invalid_argument, "study: kld_bounds must be a list of [lo, hi] pairs");
      c.kld_bounds.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
  return c;
}

json to_json(const StudyConfig& c)
{
  json bounds = json::array();
  for (const auto& [lo, hi] : c.kld_bounds)
    bounds.push_back({ lo, hi });
  return { { "scenario", to_json(c.scenario) },
           { "model", to_json(c.model) },
           { "optimizer", to_json(c.optimizer) },
           { "cv", to_json(c.cv) },
           { "gaussian_baseline", c.gaussian_baseline },
           { "kld_points", c.kld_points },
           { "kld_bounds", bounds },
           { "check_points", c.check_points } };
}

StudyResult run_study(const StudyConfig& config, const StudyProgress& progress)
{
  config.scenario.validate();
  require(config.model.n_states == config.scenario.n_states(),
          "study: model and scenario must have the same number of states");
  require(config.kld_points >= 2, "study: kld_points must be >= 2");
  require(config.check_points >= 2, "study: check_points must be >= 2");
  require(config.kld_bounds.empty() || static_cast<int>(config.kld_bounds.size()) == config.scenario.dim(),
          "study: kld_bounds needs one pair per dimension");

  const int R = config.scenario.runs;
  std::vector<std::optional<RunOutput>> outputs(static_cast<std::size_t>(R));
  std::atomic<int> done{ 0 };
  parallel_for(static_cast<std::size_t>(R), [&](std::size_t r) {
    outputs[r] = study_run(config, static_cast<int>(r));
    const int d = ++done;
    if (progress)
      progress(d, R);
  });

  StudyResult result;
  std::map<std::string, StudySummaryRow> by_model;
  std::vector<std::string> order;
  for (const auto& o : outputs) {
    for (const StudyFit& f : o->fits) {
      result.fits.push_back(f);
      auto [it, inserted] = by_model.try_emplace(f.model);
      if (inserted)
        order.push_back(f.model);
      StudySummaryRow& s = it->second;
      s.model = f.model;
      if (s.mean_kld.empty()) {
        s.mean_kld.assign(f.kld.size(), 0.0);
        s.mean_gamma_diag.assign(f.gamma_diag.size(), 0.0);
      }
      ++s.runs;
      s.mean_accuracy += f.accuracy;
      for (std::size_t i = 0; i < f.kld.size(); ++i)
        s.mean_kld[i] += f.kld[i];
      for (std::size_t i = 0; i < f.gamma_diag.size(); ++i)
        s.mean_gamma_diag[i] += f.gamma_diag[i];
      s.nonconverged += f.converged ? 0 : 1;
      s.density_checks += f.density_checks;
      s.density_failures += f.density_failures;
    }
    for (const StudyCvRow& c : o->cv)
      result.cv.push_back(c);
    if (auto it = by_model.find("nonparametric"); it != by_model.end()) {
      it->second.density_checks += o->cv_checks;
      it->second.density_failures += o->cv_failures;
    }
  }
  for (const auto& name : order) {
    StudySummaryRow s = by_model.at(name);
    const double n = s.runs;
    s.mean_accuracy /= n;
    double all = 0.0;
    for (double& k : s.mean_kld) {
      k /= n;
      all += k;
    }
    s.mean_kld_all = s.mean_kld.empty() ? 0.0 : all / static_cast<double>(s.mean_kld.size());
    for (double& g : s.mean_gamma_diag)
      g /= n;
    result.summary.push_back(std::move(s));
  }
  return result;
}

std::string StudyResult::fits_csv() const
{
  std::ostringstream os;
  const std::size_t N = fits.empty() ? 0 : fits.front().kld.size();
  os << "run,model,basis_counts,log_likelihood,converged,iterations,accuracy";
  for (std::size_t i = 1; i <= N; ++i)
    os << ",kld_" << i;
  for (std::size_t i = 1; i <= N; ++i)
    os << ",gamma_" << i << i;
  os << ",density_checks,density_failures\n";
  for (const auto& f : fits) {
    os << f.run + 1 << ',' << f.model << ',' << counts_label(f.basis_counts) << ','
       << csv_number(f.log_likelihood) << ',' << (f.converged ? 1 : 0) << ',' << f.iterations << ','
       << csv_number(f.accuracy);
    for (double k : f.kld)
      os << ',' << csv_number(k);
    for (std::size_t i = 0; i < N; ++i)
      os << ',' << (i < f.gamma_diag.size() ? csv_number(f.gamma_diag[i]) : std::string("nan"));
    os << ',' << f.density_checks << ',' << f.density_failures << '\n';
  }
  return os.str();
}

std::string StudyResult::cv_csv() const
{
  std::ostringstream os;
  os << "run,basis_counts,mean_score,failed_folds,nonconverged_folds,disqualified,selected\n";
  for (const auto& c : cv)
    os << c.run + 1 << ',' << counts_label(c.counts) << ',' << csv_number(c.mean_score) << ','
       << c.failed_folds << ',' << c.nonconverged_folds << ',' << (c.disqualified ? 1 : 0) << ','
       << (c.selected ? 1 : 0) << '\n';
  return os.str();
}

std::string StudyResult::summary_csv() const
{
  std::ostringstream os;
  const std::size_t N = summary.empty() ? 0 : summary.front().mean_kld.size();
  os << "model,runs,mean_accuracy";
  for (std::size_t i = 1; i <= N; ++i)
    os << ",mean_kld_" << i;
  os << ",mean_kld";
  for (std::size_t i = 1; i <= N; ++i)
    os << ",mean_gamma_" << i << i;
  os << ",nonconverged,density_checks,density_failures\n";
  for (const auto& s : summary) {
    os << s.model << ',' << s.runs << ',' << csv_number(s.mean_accuracy);
    for (double k : s.mean_kld)
      os << ',' << csv_number(k);
    os << ',' << csv_number(s.mean_kld_all);
    for (std::size_t i = 0; i < N; ++i)
      os << ',' << (i < s.mean_gamma_diag.size() ? csv_number(s.mean_gamma_diag[i]) : std::string("nan"));
    os << ',' << s.nonconverged << ',' << s.density_checks << ',' << s.density_failures << '\n';
  }
  return os.str();
}

} // namespace nphmm
