// Acceptance checks. Prints one PASS/FAIL line per criterion; exit code 1 if any fail.
// Optional arguments select a subset of criteria, e.g. `acceptance 1 2 9`;
// `--log FILE` also writes the lines to FILE.

#include "fixtures.hpp"
#include "oracles.hpp"

#include "nphmm/covariate_tpm.hpp"
#include "nphmm/estimation.hpp"
#include "nphmm/study.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

using namespace nphmm;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 6)
{
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome likelihood_oracle()
{
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> len(1, 8);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    HmmModel m = fixture::random_spline_model(2, 2, 5, rng);
    Sequence s = fixture::random_sequence(len(rng), 2, rng);
    const Eigen::MatrixXd g = fixture::gamma_of(m);
    const double ref = oracle::path_sum_log_likelihood(stationary_distribution(g), g, m.density_matrix(s));
    worst = std::max(worst, std::abs(log_likelihood(m, s) - ref));
  }
  const double secs = seconds_since(t0);
  return { worst <= 1e-10 && secs < 60.0, "max |diff| " + fmt(worst) + ", " + fmt(secs, 3) + " s" };
}

Outcome viterbi_oracle()
{
  std::mt19937_64 rng(102);
  std::uniform_int_distribution<int> len(1, 8);
  int agree = 0;
  for (int rep = 0; rep < 50; ++rep) {
    HmmModel m = fixture::random_spline_model(2, 2, 5, rng);
    Sequence s = fixture::random_sequence(len(rng), 2, rng);
    const Eigen::MatrixXd g = fixture::gamma_of(m);
    agree += viterbi(m, s) == oracle::brute_viterbi(stationary_distribution(g), g, m.density_matrix(s));
  }
  return { agree == 50, std::to_string(agree) + "/50 paths equal" };
}

double fd_error(const SequenceSet& data, const HmmModel& model)
{
  LikelihoodEvaluator ev(data, model);
  std::vector<double> x = pack_parameters(model);
  std::vector<double> grad(x.size());
  ev.value_and_gradient(model, grad);
  auto f = [&](std::span<const double> p) {
    HmmModel m = model;
    unpack_parameters(m, p);
    return ev.value(m);
  };
  return oracle::relative_error(grad, oracle::fd_gradient(f, x, 1e-6));
}

Outcome gradient_checks()
{
  std::mt19937_64 rng(108);
  std::normal_distribution<double> z(0.0, 0.7);
  double worst = 0.0;
  int models = 0;
  // Spline emissions with a fixed t.p.m.
  for (int rep = 0; rep < 10; ++rep, ++models) {
    HmmModel m = fixture::random_spline_model(2 + rep % 2, 2, 5, rng);
    SequenceSet data = fixture::single(fixture::random_sequence(40, 2, rng));
    data.sequences[0].missing[5] = 1;
    worst = std::max(worst, fd_error(data, m));
  }
  // Gaussian emissions.
  for (int rep = 0; rep < 5; ++rep, ++models) {
    std::vector<GaussianEmission> em;
    for (int i = 0; i < 2; ++i) {
      Eigen::Matrix2d a;
      a << z(rng), z(rng), z(rng), z(rng);
      em.emplace_back(Eigen::Vector2d(0.5 + 0.2 * z(rng), 0.5 + 0.2 * z(rng)),
                      0.1 * a * a.transpose() + 0.05 * Eigen::Matrix2d::Identity());
    }
    HmmModel m(TransitionMatrix(oracle::random_tpm(2, rng)), std::move(em));
    SequenceSet data = fixture::single(fixture::random_sequence(40, 2, rng));
    worst = std::max(worst, fd_error(data, m));
  }
  // Covariate-dependent transitions.
  for (int rep = 0; rep < 5; ++rep, ++models) {
    HmmModel base = fixture::random_spline_model(2, 2, 5, rng);
    CovariateTransition ct(2, 2);
    std::vector<double> w(ct.num_parameters());
    for (auto& v : w)
      v = z(rng);
    ct.set_parameters(w);
    HmmModel m(ct, std::get<std::vector<TensorEmission>>(base.emissions()));
    SequenceSet data = fixture::single(fixture::random_sequence(30, 2, rng));
    data.n_covariates = 2;
    data.sequences[0].covariates.resize(30, 2);
    for (int t = 0; t < 30; ++t)
      data.sequences[0].covariates.row(t) << z(rng), z(rng);
    worst = std::max(worst, fd_error(data, m));
  }
  return { worst <= 1e-4, std::to_string(models) + " models, max relative error " + fmt(worst) };
}

Outcome covariate_tpm()
{
  Eigen::MatrixXd g(2, 2);
  g << 0.948, 0.052, 0.034, 0.966;
  const auto logits = pack_tpm(TransitionMatrix(g));
  const double round_trip = (unpack_tpm(2, logits).matrix() - g).cwiseAbs().maxCoeff();

  CovariateTransition ct(2, 1);
  ct.intercept()(0, 1) = std::log(0.052 / 0.948);
  ct.intercept()(1, 0) = std::log(0.034 / 0.966);
  std::vector<std::vector<double>> grid;
  for (int k = 0; k <= 90; ++k)
    grid.push_back({ static_cast<double>(k) });
  const auto curve = steady_state_curve(ct, grid);
  const double closed = 0.034 / (0.034 + 0.052);
  double worst_closed = 0.0, worst_quoted = 0.0, worst_tpm = 0.0;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    worst_closed = std::max({ worst_closed, std::abs(curve[k](0) - closed), std::abs(curve[k](1) - (1 - closed)) });
    worst_quoted = std::max({ worst_quoted, std::abs(curve[k](0) - 0.3953), std::abs(curve[k](1) - 0.6047) });
    worst_tpm = std::max(worst_tpm, (ct.tpm_at(grid[k]).matrix() - g).cwiseAbs().maxCoeff());
  }
  const bool ok = round_trip <= 1e-12 && worst_tpm <= 1e-12 && worst_closed <= 1e-12 && worst_quoted <= 5e-5;
  return { ok, "round trip " + fmt(round_trip) + ", intercept-only t.p.m. " + fmt(worst_tpm) +
                   ", steady state vs closed form " + fmt(worst_closed) + ", vs (0.3953, 0.6047) " + fmt(worst_quoted) };
}

StudyResult run_logged(StudyConfig cfg, const char* label)
{
  const auto t0 = std::chrono::steady_clock::now();
  StudyResult r = run_study(cfg, [&](int done, int total) {
    std::cerr << label << ": run " << done << "/" << total << " (" << fmt(seconds_since(t0), 4) << " s)\n";
  });
  return r;
}

const StudySummaryRow* summary_of(const StudyResult& r, const std::string& model)
{
  for (const auto& s : r.summary)
    if (s.model == model)
      return &s;
  return nullptr;
}

StudyConfig study_config(ScenarioConfig scenario, std::uint64_t seed)
{
  StudyConfig cfg;
  cfg.scenario = std::move(scenario);
  cfg.scenario.runs = 20;
  cfg.scenario.length = 2000;
  cfg.scenario.seed = seed;
  cfg.optimizer.seed = seed;
  cfg.cv.seed = seed;
  cfg.cv.candidates.clear();
  for (int n = 7; n <= 15; ++n)
    cfg.cv.candidates.push_back({ n });
  return cfg;
}

Outcome density_validity(const std::vector<const StudyResult*>& studies)
{
  int checks = 0, failures = 0, spline_fits = 0;
  for (const auto* r : studies) {
    for (const auto& s : r->summary) {
      checks += s.density_checks;
      failures += s.density_failures;
    }
    for (const auto& f : r->fits)
      spline_fits += f.model == "nonparametric";
  }
  // Every final spline fit carries one check per state, plus the CV fold fits.
  const bool ok = failures == 0 && checks >= 2 * spline_fits && spline_fits > 0;
  return { ok, std::to_string(checks) + " emission checks (400x400 grid) over " + std::to_string(spline_fits) +
                   " study fits and their CV folds, " + std::to_string(failures) + " failures" };
}

Outcome parameter_recovery(const StudyResult& r)
{
  const auto* np = summary_of(r, "nonparametric");
  if (!np || np->mean_gamma_diag.size() != 2)
    return { false, "no nonparametric summary" };
  const double a = np->mean_gamma_diag[0], b = np->mean_gamma_diag[1];
  const bool ok = std::abs(a - 0.97) <= 0.01 && std::abs(b - 0.97) <= 0.01;
  return { ok, "mean diagonal (" + fmt(a, 5) + ", " + fmt(b, 5) + ") over " + std::to_string(np->runs) + " runs" };
}

Outcome study1_ordering(const StudyResult& r)
{
  const auto* np = summary_of(r, "nonparametric");
  const auto* p = summary_of(r, "parametric");
  if (!np || !p)
    return { false, "missing summary rows" };
  bool kld_ok = np->mean_kld.size() == p->mean_kld.size() && !np->mean_kld.empty();
  std::string kld;
  for (std::size_t i = 0; i < np->mean_kld.size() && i < p->mean_kld.size(); ++i) {
    kld_ok = kld_ok && np->mean_kld[i] < p->mean_kld[i];
    kld += " state " + std::to_string(i + 1) + " " + fmt(np->mean_kld[i], 4) + " vs " + fmt(p->mean_kld[i], 4) + ";";
  }
  const bool acc_ok = np->mean_accuracy > p->mean_accuracy;
  return { acc_ok && kld_ok && np->runs >= 20, "accuracy " + fmt(np->mean_accuracy, 5) + " vs " +
                                                    fmt(p->mean_accuracy, 5) + "; KLD" + kld };
}

Outcome study2_ordering(const StudyResult& r)
{
  const auto* np = summary_of(r, "nonparametric");
  const auto* p = summary_of(r, "parametric");
  if (!np || !p)
    return { false, "missing summary rows" };
  const double diff = std::abs(np->mean_accuracy - p->mean_accuracy);
  const bool ok = p->mean_kld_all < np->mean_kld_all && diff <= 0.01 && np->runs >= 20;
  return { ok, "KLD parametric " + fmt(p->mean_kld_all, 4) + " vs nonparametric " + fmt(np->mean_kld_all, 4) +
                   "; accuracy difference " + fmt(100 * diff, 3) + " pp" };
}

Outcome cv_sanity(const StudyResult& r)
{
  std::vector<int> chosen;
  for (const auto& row : r.cv)
    if (row.selected && row.run < 10 && !row.counts.empty())
      chosen.push_back(row.counts[0]);
  int interior = 0;
  std::string list;
  for (int n : chosen) {
    interior += n > 7 && n < 15;
    list += " " + std::to_string(n);
  }
  return { chosen.size() == 10 && interior >= 7,
           std::to_string(interior) + "/" + std::to_string(chosen.size()) + " interior; selected:" + list };
}

int shell(const std::string& cmd)
{
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome cli_reproducible()
{
  const fs::path dir = fs::temp_directory_path() / ("nphmm_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const std::string base = std::string(NPHMM_CLI) + " --seed 2024 study --runs 2 --length 500 --out ";
  const int a = shell(base + (dir / "a").string() + " >/dev/null");
  const int b = shell(base + (dir / "b").string() + " >/dev/null");
  bool same = a == 0 && b == 0;
  std::string detail = "exit codes " + std::to_string(a) + "," + std::to_string(b);
  for (const char* f : { "fits.csv", "summary.csv", "cv.csv", "config.json" }) {
    const bool eq = fs::exists(dir / "a" / f) && slurp(dir / "a" / f) == slurp(dir / "b" / f);
    same = same && eq;
    detail += std::string("; ") + f + (eq ? " identical" : " differs");
  }
  fs::remove_all(dir);
  return { same, detail };
}

} // namespace

int main(int argc, char** argv)
{
  std::set<int> want;
  std::ofstream log;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--log" && i + 1 < argc)
      log.open(argv[++i], std::ios::trunc);
    else
      want.insert(std::atoi(argv[i]));
  }
  auto wanted = [&](int c) { return want.empty() || want.count(c); };

  std::vector<std::pair<int, Outcome>> results;
  auto report = [&](int c, const char* name, Outcome o) {
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", c, name, o.detail.c_str());
    std::fflush(stdout);
    if (log)
      log << (o.pass ? "PASS " : "FAIL ") << c << ' ' << name << ": " << o.detail << std::endl;
    results.emplace_back(c, std::move(o));
  };

  if (wanted(1))
    report(1, "likelihood oracle", likelihood_oracle());
  if (wanted(2))
    report(2, "viterbi oracle", viterbi_oracle());
  if (wanted(8))
    report(8, "gradient checks", gradient_checks());
  if (wanted(9))
    report(9, "covariate t.p.m.", covariate_tpm());

  std::optional<StudyResult> s1, s2;
  if (wanted(3) || wanted(4) || wanted(5) || wanted(7))
    s1 = run_logged(study_config(ScenarioConfig::default_copula_gamma(), 1), "copula-gamma study");
  if (wanted(3) || wanted(6))
    s2 = run_logged(study_config(ScenarioConfig::default_gaussian(), 2), "gaussian study");

  if (wanted(3)) {
    std::vector<const StudyResult*> all{ &*s1, &*s2 };
    report(3, "density validity", density_validity(all));
  }
  if (wanted(4))
    report(4, "parameter recovery", parameter_recovery(*s1));
  if (wanted(5))
    report(5, "study 1 ordering", study1_ordering(*s1));
  if (wanted(6))
    report(6, "study 2 ordering", study2_ordering(*s2));
  if (wanted(7))
    report(7, "cv sanity", cv_sanity(*s1));
  if (wanted(10))
    report(10, "reproducibility", cli_reproducible());

  bool all = true;
  for (const auto& [c, o] : results)
    all = all && o.pass;
  return all ? 0 : 1;
}
