#include "nphmm/nphmm.h"

#include "nphmm/config.hpp"
#include "nphmm/data_io.hpp"
#include "nphmm/error.hpp"
#include "nphmm/parallel.hpp"
#include "nphmm/study.hpp"

#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>

struct nphmm_dataset
{
  nphmm::Dataset value;
};

struct nphmm_model
{
  nphmm::ModelArtifact value;
};

namespace {

using nlohmann::json;
using namespace nphmm;

thread_local std::string g_last_error;

nphmm_status to_status(ErrorCode code)
{
  switch (code) {
  case ErrorCode::invalid_argument:
    return NPHMM_ERR_INVALID_ARGUMENT;
  case ErrorCode::dimension_mismatch:
    return NPHMM_ERR_DIMENSION_MISMATCH;
  case ErrorCode::degenerate_chain:
    return NPHMM_ERR_DEGENERATE_CHAIN;
  case ErrorCode::io_error:
    return NPHMM_ERR_IO;
  case ErrorCode::parse_error:
    return NPHMM_ERR_PARSE;
  case ErrorCode::version_mismatch:
    return NPHMM_ERR_VERSION_MISMATCH;
  case ErrorCode::corrupt_file:
    return NPHMM_ERR_CORRUPT_FILE;
  case ErrorCode::init_failure:
    return NPHMM_ERR_INIT_FAILURE;
  case ErrorCode::fit_failure:
    return NPHMM_ERR_FIT_FAILURE;
  case ErrorCode::already_exists:
    return NPHMM_ERR_ALREADY_EXISTS;
  case ErrorCode::internal:
    break;
  }
  return NPHMM_ERR_INTERNAL;
}

template <class F>
nphmm_status guarded(F&& body)
{
  try {
    body();
    g_last_error.clear();
    return NPHMM_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return NPHMM_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return NPHMM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NPHMM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return NPHMM_ERR_INTERNAL;
  }
}

void need(const void* p, const char* name)
{
  if (!p)
    fail(ErrorCode::invalid_argument, std::string(name) + " must not be NULL");
}

char* dup_string(const std::string& s)
{
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out)
    throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s)
{
  if (out)
    *out = dup_string(s);
}

json parse_json(const char* text, const char* what)
{
  if (!text || !*text)
    return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse_error, std::string(what) + " is not valid JSON: " + e.what());
  }
}

json report_json(const FitReport& r)
{
  json lls = json::array();
  for (double v : r.restart_log_likelihoods)
    lls.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  return { { "log_likelihood", r.log_likelihood },
           { "iterations", r.iterations },
           { "evaluations", r.evaluations },
           { "grad_norm", r.grad_norm },
           { "converged", r.converged },
           { "status", r.status },
           { "support_escapes", r.support_escapes },
           { "wall_seconds", r.wall_seconds },
           { "best_restart", r.best_restart },
           { "restart_log_likelihoods", lls },
           { "basis_counts", r.basis_counts } };
}

struct FitSettings
{
  ModelConfig model;
  OptimizerConfig optimizer;
  CvPlan cv;
};

FitSettings read_settings(const json& j, bool with_cv)
{
  if (with_cv)
    check_keys(j, { "model", "optimizer", "cv" }, "config");
  else
    check_keys(j, { "model", "optimizer" }, "config");
  FitSettings s;
  if (j.contains("model"))
    s.model = model_config_from_json(j.at("model"));
  if (j.contains("optimizer"))
    s.optimizer = optimizer_config_from_json(j.at("optimizer"));
  if (with_cv && j.contains("cv"))
    s.cv = cv_plan_from_json(j.at("cv"));
  return s;
}

ModelArtifact make_artifact(HmmModel model, const Dataset& data, json metadata)
{
  return { std::move(model), data.schema, data.standardization, std::move(metadata) };
}

std::vector<std::string> dimension_names(const ModelArtifact& a)
{
  const int D = a.model.dim();
  if (static_cast<int>(a.schema.observation_columns.size()) == D)
    return a.schema.observation_columns;
  std::vector<std::string> out;
  for (int d = 0; d < D; ++d)
    out.push_back("x" + std::to_string(d + 1));
  return out;
}

std::vector<std::pair<double, double>> default_box(const HmmModel& model)
{
  std::vector<std::pair<double, double>> box;
  if (const auto* spl = std::get_if<std::vector<TensorEmission>>(&model.emissions())) {
    for (const auto& b : spl->front().bases())
      box.emplace_back(b.support_lo(), b.support_hi());
    return box;
  }
  const auto& gau = std::get<std::vector<GaussianEmission>>(model.emissions());
  for (int d = 0; d < model.dim(); ++d) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& g : gau) {
      const double sd = std::sqrt(g.covariance()(d, d));
      lo = std::min(lo, g.mean()(d) - 4.0 * sd);
      hi = std::max(hi, g.mean()(d) + 4.0 * sd);
    }
    box.emplace_back(lo, hi);
  }
  return box;
}

} // namespace

extern "C" {

const char* nphmm_version(void)
{
  return "0.1.0";
}

const char* nphmm_last_error(void)
{
  return g_last_error.c_str();
}

const char* nphmm_status_name(nphmm_status status)
{
  switch (status) {
  case NPHMM_OK:
    return "ok";
  case NPHMM_ERR_INVALID_ARGUMENT:
    return "invalid-argument";
  case NPHMM_ERR_DIMENSION_MISMATCH:
    return "dimension-mismatch";
  case NPHMM_ERR_DEGENERATE_CHAIN:
    return "degenerate-chain";
  case NPHMM_ERR_IO:
    return "io-error";
  case NPHMM_ERR_PARSE:
    return "parse-error";
  case NPHMM_ERR_VERSION_MISMATCH:
    return "version-mismatch";
  case NPHMM_ERR_CORRUPT_FILE:
    return "corrupt-file";
  case NPHMM_ERR_INIT_FAILURE:
    return "init-failure";
  case NPHMM_ERR_FIT_FAILURE:
    return "fit-failure";
  case NPHMM_ERR_ALREADY_EXISTS:
    return "already-exists";
  case NPHMM_ERR_INTERNAL:
    return "internal";
  }
  return "unknown";
}

void nphmm_string_free(char* s)
{
  std::free(s);
}

nphmm_status nphmm_set_threads(int threads)
{
  return guarded([&] {
    require(threads >= 0, "thread count must be nonnegative");
    set_thread_count(static_cast<unsigned>(threads));
  });
}

nphmm_status nphmm_dataset_load_csv(const char* path, const char* schema_json, nphmm_dataset** out)
{
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    const DatasetSchema schema = schema_from_json(parse_json(schema_json, "schema"));
    *out = new nphmm_dataset{ load_dataset(path, schema) };
  });
}

nphmm_status nphmm_dataset_load_csv_for_model(const char* path, const nphmm_model* model, nphmm_dataset** out)
{
  return guarded([&] {
    need(path, "path");
    need(model, "model");
    need(out, "out");
    *out = nullptr;
    Dataset ds = load_dataset(path, model->value.schema, &model->value.standardization);
    if (ds.data.dim != model->value.model.dim())
      fail(ErrorCode::dimension_mismatch, "data dimension does not match the model");
    *out = new nphmm_dataset{ std::move(ds) };
  });
}

nphmm_status nphmm_dataset_info(const nphmm_dataset* data, int* n_sequences, int* dim, int* n_covariates,
                                long* total_length)
{
  return guarded([&] {
    need(data, "data");
    if (n_sequences)
      *n_sequences = static_cast<int>(data->value.data.sequences.size());
    if (dim)
      *dim = data->value.data.dim;
    if (n_covariates)
      *n_covariates = data->value.data.n_covariates;
    if (total_length)
      *total_length = static_cast<long>(data->value.data.total_length());
  });
}

void nphmm_dataset_free(nphmm_dataset* data)
{
  delete data;
}

nphmm_status nphmm_fit(const nphmm_dataset* data, const char* config_json, const nphmm_model* warm_start,
                       nphmm_model** out, char** report)
{
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    *out = nullptr;
    const json cfg = parse_json(config_json, "config");
    const FitSettings s = read_settings(cfg, false);
    FitResult fr = warm_start ? fit(data->value.data, warm_start->value.model, s.optimizer)
                              : fit_model(data->value.data, s.model, s.optimizer);
    json rep = report_json(fr.report);
    put(report, rep.dump(2));
    // Wall time stays out of the artifact so refits are byte-identical.
    rep.erase("wall_seconds");
    json meta = { { "report", rep },
                  { "model_config", to_json(s.model) },
                  { "optimizer", to_json(s.optimizer) },
                  { "warm_start", warm_start != nullptr } };
    *out = new nphmm_model{ make_artifact(std::move(fr.model), data->value, std::move(meta)) };
  });
}

nphmm_status nphmm_cross_validate(const nphmm_dataset* data, const char* config_json, char** table_csv,
                                  nphmm_model** selected, char** report)
{
  return guarded([&] {
    need(data, "data");
    if (selected)
      *selected = nullptr;
    const json cfg = parse_json(config_json, "config");
    FitSettings s = read_settings(cfg, true);
    if (s.cv.candidates.empty())
      s.cv.candidates = { s.model.basis_counts };
    const CvResult cv = cross_validate(data->value.data, s.cv, s.model, s.optimizer);

    std::ostringstream os;
    os << "basis_counts,mean_score,failed_folds,nonconverged_folds,disqualified,selected";
    for (int f = 1; f <= s.cv.n_folds; ++f)
      os << ",fold_" << f;
    os << '\n';
    json rows = json::array();
    for (std::size_t c = 0; c < cv.rows.size(); ++c) {
      const CvRow& r = cv.rows[c];
      std::string label;
      for (std::size_t i = 0; i < r.counts.size(); ++i)
        label += (i ? "x" : "") + std::to_string(r.counts[i]);
      os << label << ',' << csv_number(r.mean_score) << ',' << r.failed_folds << ',' << r.nonconverged_folds
         << ',' << (r.disqualified ? 1 : 0) << ',' << (c == cv.selected ? 1 : 0);
      for (double v : r.fold_scores)
        os << ',' << csv_number(v);
      os << '\n';
      rows.push_back({ { "basis_counts", r.counts },
                       { "mean_score", r.mean_score },
                       { "failed_folds", r.failed_folds },
                       { "nonconverged_folds", r.nonconverged_folds },
                       { "disqualified", r.disqualified } });
    }
    put(table_csv, os.str());

    json meta = { { "selected", cv.rows[cv.selected].counts },
                  { "rows", rows },
                  { "density_checks", cv.density_checks },
                  { "density_check_failures", cv.density_check_failures },
                  { "cv", to_json(s.cv) } };
    if (selected) {
      ModelConfig final_cfg = s.model;
      final_cfg.basis_counts = cv.rows[cv.selected].counts;
      final_cfg.support = cv.support;
      FitResult fr = fit_model(data->value.data, final_cfg, s.optimizer);
      meta["report"] = report_json(fr.report);
      meta["report"].erase("wall_seconds");
      meta["model_config"] = to_json(final_cfg);
      meta["optimizer"] = to_json(s.optimizer);
      *selected = new nphmm_model{ make_artifact(std::move(fr.model), data->value, meta) };
    }
    put(report, meta.dump(2));
  });
}

nphmm_status nphmm_model_load(const char* path, nphmm_model** out)
{
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new nphmm_model{ load_model(path) };
  });
}

nphmm_status nphmm_model_save(const nphmm_model* model, const char* path, int force)
{
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    save_model(model->value, path, force != 0);
  });
}

nphmm_status nphmm_model_to_json(const nphmm_model* model, char** out)
{
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = dup_string(artifact_to_json(model->value).dump(2));
  });
}

nphmm_status nphmm_model_info(const nphmm_model* model, int* n_states, int* dim, int* is_spline,
                              int* has_covariates)
{
  return guarded([&] {
    need(model, "model");
    const HmmModel& m = model->value.model;
    if (n_states)
      *n_states = m.n_states();
    if (dim)
      *dim = m.dim();
    if (is_spline)
      *is_spline = m.is_spline() ? 1 : 0;
    if (has_covariates)
      *has_covariates = m.has_covariates() ? 1 : 0;
  });
}

void nphmm_model_free(nphmm_model* model)
{
  delete model;
}

nphmm_status nphmm_log_likelihood(const nphmm_model* model, const nphmm_dataset* data, double* out)
{
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    need(out, "out");
    *out = joint_log_likelihood(model->value.model, data->value.data);
  });
}

nphmm_status nphmm_decode(const nphmm_model* model, const nphmm_dataset* data, char** csv)
{
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    need(csv, "csv");
    const auto& seqs = data->value.data.sequences;
    std::vector<std::vector<int>> paths(seqs.size());
    parallel_for(seqs.size(), [&](std::size_t m) { paths[m] = viterbi(model->value.model, seqs[m]); });
    std::ostringstream os;
    os << "sequence,t,state\n";
    for (std::size_t m = 0; m < seqs.size(); ++m)
      for (std::size_t t = 0; t < paths[m].size(); ++t)
        os << seqs[m].id << ',' << t + 1 << ',' << paths[m][t] + 1 << '\n';
    *csv = dup_string(os.str());
  });
}

nphmm_status nphmm_export_density(const nphmm_model* model, const char* grid_json, int state, char** csv)
{
  return guarded([&] {
    need(model, "model");
    need(csv, "csv");
    const HmmModel& m = model->value.model;
    require(state >= 0 && state < m.n_states(), "state index out of range");
    const GridSpec spec = grid_spec_from_json(parse_json(grid_json, "grid"));
    const int D = m.dim();
    require(spec.points.size() == 1 || static_cast<int>(spec.points.size()) == D,
            "grid: points needs one entry or one per dimension");
    const auto box = spec.bounds.empty() ? default_box(m) : spec.bounds;
    if (static_cast<int>(box.size()) != D)
      fail(ErrorCode::dimension_mismatch, "grid: bounds need one pair per dimension");
    std::vector<GridAxis> axes;
    for (int d = 0; d < D; ++d)
      axes.push_back({ box[d].first, box[d].second, spec.points.size() == 1 ? spec.points[0] : spec.points[d] });

    std::vector<double> values;
    if (const auto* spl = std::get_if<std::vector<TensorEmission>>(&m.emissions())) {
      values = (*spl)[state].density_grid(axes);
    } else {
      std::size_t total = 1;
      for (const auto& a : axes)
        total *= static_cast<std::size_t>(a.count);
      values.resize(total);
      std::vector<double> y(D);
      std::vector<int> idx(D, 0);
      for (std::size_t r = 0; r < total; ++r) {
        for (int d = 0; d < D; ++d)
          y[d] = axes[d].at(idx[d]);
        values[r] = m.density(state, y);
        for (int d = D - 1; d >= 0; --d) {
          if (++idx[d] < axes[d].count)
            break;
          idx[d] = 0;
        }
      }
    }

    std::ostringstream os;
    for (const auto& name : dimension_names(model->value))
      os << name << ',';
    os << "density\n";
    std::vector<int> idx(D, 0);
    for (double v : values) {
      for (int d = 0; d < D; ++d)
        os << csv_number(axes[d].at(idx[d])) << ',';
      os << csv_number(v) << '\n';
      for (int d = D - 1; d >= 0; --d) {
        if (++idx[d] < axes[d].count)
          break;
        idx[d] = 0;
      }
    }
    *csv = dup_string(os.str());
  });
}

nphmm_status nphmm_steady_state_curve(const nphmm_model* model, const char* curve_json, char** csv)
{
  return guarded([&] {
    need(model, "model");
    need(csv, "csv");
    const HmmModel& m = model->value.model;
    const auto* cov = std::get_if<CovariateTransition>(&m.transition());
    if (!cov)
      fail(ErrorCode::invalid_argument, "steady-state curves need a covariate-dependent model");
    const CurveSpec spec = curve_spec_from_json(parse_json(curve_json, "curve"));
    const DatasetSchema& schema = model->value.schema;
    const auto& base = schema.covariate_columns;
    const std::size_t P = base.size();
    if (static_cast<int>(P + schema.interactions.size()) != cov->n_covariates())
      fail(ErrorCode::dimension_mismatch, "model covariates do not match its stored schema");
    auto where = std::find(base.begin(), base.end(), spec.covariate);
    if (where == base.end())
      fail(ErrorCode::invalid_argument, "curve: unknown covariate '" + spec.covariate + "'");
    const std::size_t varied = static_cast<std::size_t>(where - base.begin());
    for (const auto& [name, value] : spec.fixed)
      if (std::find(base.begin(), base.end(), name) == base.end())
        fail(ErrorCode::invalid_argument, "curve: unknown fixed covariate '" + name + "'");

    std::vector<double> x0(P);
    for (std::size_t l = 0; l < P; ++l) {
      auto it = spec.fixed.find(base[l]);
      x0[l] = it != spec.fixed.end() ? it->second : cov->center()(static_cast<Eigen::Index>(l));
    }
    std::vector<std::vector<double>> grid;
    std::vector<double> xs;
    for (int g = 0; g < spec.points; ++g) {
      const double x = spec.lo + (spec.hi - spec.lo) * g / (spec.points - 1);
      std::vector<double> v = x0;
      v[varied] = x;
      for (const auto& [a, b] : schema.interactions) {
        const auto ia = std::find(base.begin(), base.end(), a) - base.begin();
        const auto ib = std::find(base.begin(), base.end(), b) - base.begin();
        v.push_back(v[ia] * v[ib]);
      }
      grid.push_back(std::move(v));
      xs.push_back(x);
    }
    const auto curve = steady_state_curve(*cov, grid);
    std::ostringstream os;
    os << spec.covariate;
    for (int i = 1; i <= m.n_states(); ++i)
      os << ",state_" << i;
    os << '\n';
    for (std::size_t g = 0; g < curve.size(); ++g) {
      os << csv_number(xs[g]);
      for (Eigen::Index i = 0; i < curve[g].size(); ++i)
        os << ',' << csv_number(curve[g](i));
      os << '\n';
    }
    *csv = dup_string(os.str());
  });
}

nphmm_status nphmm_simulate(const char* scenario_json, int run_index, char** observations_csv,
                            char** states_csv)
{
  return guarded([&] {
    require(run_index >= 0, "run index must be nonnegative");
    const ScenarioConfig sc = scenario_from_json(parse_json(scenario_json, "scenario"));
    const SimulatedRun run = simulate_run(sc, run_index);
    const Eigen::MatrixXd& y = run.sequence.observations;
    std::ostringstream obs;
    obs << "sequence";
    for (Eigen::Index d = 0; d < y.cols(); ++d)
      obs << ",y" << d + 1;
    obs << '\n';
    std::ostringstream st;
    st << "sequence,t,state\n";
    for (Eigen::Index t = 0; t < y.rows(); ++t) {
      obs << run.sequence.id;
      for (Eigen::Index d = 0; d < y.cols(); ++d)
        obs << ',' << csv_number(y(t, d));
      obs << '\n';
      st << run.sequence.id << ',' << t + 1 << ',' << run.states[t] + 1 << '\n';
    }
    put(observations_csv, obs.str());
    put(states_csv, st.str());
  });
}

nphmm_status nphmm_run_study(const char* study_json, char** fits_csv, char** summary_csv, char** cv_csv)
{
  return guarded([&] {
    const StudyConfig cfg = study_config_from_json(parse_json(study_json, "study"));
    const StudyResult r = run_study(cfg);
    put(fits_csv, r.fits_csv());
    put(summary_csv, r.summary_csv());
    put(cv_csv, r.cv_csv());
  });
}

} // extern "C"
