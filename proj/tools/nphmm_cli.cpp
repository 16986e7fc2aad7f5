// Command-line front end over the C API.

#include "nphmm/nphmm.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitModel = 1;
constexpr int kExitUsage = 2;

struct CliError
{
  int code;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& msg)
{
  throw CliError{ kExitUsage, msg };
}

void check(nphmm_status status)
{
  if (status == NPHMM_OK)
    return;
  int code = kExitUsage;
  switch (status) {
  case NPHMM_ERR_DEGENERATE_CHAIN:
  case NPHMM_ERR_INIT_FAILURE:
  case NPHMM_ERR_FIT_FAILURE:
  case NPHMM_ERR_INTERNAL:
    code = kExitModel;
    break;
  default:
    break;
  }
  throw CliError{ code, std::string(nphmm_status_name(status)) + ": " + nphmm_last_error() };
}

struct CString
{
  char* p = nullptr;
  ~CString() { nphmm_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

struct DatasetPtr
{
  nphmm_dataset* p = nullptr;
  ~DatasetPtr() { nphmm_dataset_free(p); }
};

struct ModelPtr
{
  nphmm_model* p = nullptr;
  ~ModelPtr() { nphmm_model_free(p); }
};

json read_json_file(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    usage_error("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    usage_error("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

std::vector<int> parse_int_list(const std::string& text)
{
  // "7-15", "7,9,11" or "10"
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dash = part.find('-', 1);
    try {
      if (dash != std::string::npos) {
        const int lo = std::stoi(part.substr(0, dash));
        const int hi = std::stoi(part.substr(dash + 1));
        if (hi < lo)
          usage_error("bad range '" + part + "'");
        for (int v = lo; v <= hi; ++v)
          out.push_back(v);
      } else {
        out.push_back(std::stoi(part));
      }
    } catch (const std::logic_error&) {
      usage_error("bad integer list '" + text + "'");
    }
  }
  if (out.empty())
    usage_error("empty integer list");
  return out;
}

std::vector<std::string> split_names(const std::string& text)
{
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!part.empty())
      out.push_back(part);
  return out;
}

void ensure_writable(const std::vector<fs::path>& targets, bool force)
{
  for (const auto& p : targets)
    if (!force && fs::exists(p))
      usage_error("refusing to overwrite '" + p.string() + "' (use --force)");
}

void write_file(const fs::path& path, const std::string& text)
{
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    usage_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out)
    usage_error("failed writing '" + path.string() + "'");
}

json& section(json& cfg, const char* key)
{
  if (!cfg.contains(key) || cfg[key].is_null())
    cfg[key] = json::object();
  if (!cfg[key].is_object())
    usage_error(std::string("config: '") + key + "' must be an object");
  return cfg[key];
}

// Options shared by the modeling subcommands; unset flags leave the config alone.
struct ModelFlags
{
  std::optional<int> states;
  std::optional<std::string> family;
  std::optional<std::string> basis;
  std::optional<int> restarts;
  std::optional<int> max_iter;
  std::optional<bool> covariates;

  void add(CLI::App* app)
  {
    app->add_option("--states", states, "number of hidden states");
    app->add_option("--family", family, "emission family: spline or gaussian");
    app->add_option("--basis", basis, "basis functions per dimension, e.g. 10 or 10,12");
    app->add_option("--restarts", restarts, "jittered optimizer restarts");
    app->add_option("--max-iter", max_iter, "optimizer iteration cap");
    app->add_flag("--covariates,!--no-covariates", covariates, "covariate-dependent transition probabilities");
  }

  void apply(json& cfg) const
  {
    json& m = section(cfg, "model");
    json& o = section(cfg, "optimizer");
    if (states)
      m["n_states"] = *states;
    if (family)
      m["family"] = *family;
    if (basis)
      m["basis_counts"] = parse_int_list(*basis);
    if (covariates)
      m["use_covariates"] = *covariates;
    if (restarts)
      o["restarts"] = *restarts;
    if (max_iter)
      o["max_iter"] = *max_iter;
  }
};

struct DataFlags
{
  std::optional<std::string> path;
  std::optional<std::string> sequence_column;
  std::optional<std::string> observations;
  std::optional<std::string> covariates;
  std::optional<std::string> standardize;

  void add(CLI::App* app)
  {
    app->add_option("--data", path, "input CSV");
    app->add_option("--sequence-column", sequence_column, "sequence id column");
    app->add_option("--observations", observations, "comma-separated observation columns");
    app->add_option("--covariate-columns", covariates, "comma-separated covariate columns");
    app->add_option("--standardize", standardize, "comma-separated columns to standardize");
  }

  void apply(json& cfg) const
  {
    json& d = section(cfg, "data");
    json& s = section(d, "schema");
    if (path)
      d["path"] = *path;
    if (sequence_column)
      s["sequence_column"] = *sequence_column;
    if (observations)
      s["observation_columns"] = split_names(*observations);
    if (covariates)
      s["covariate_columns"] = split_names(*covariates);
    if (standardize)
      s["standardize"] = split_names(*standardize);
  }

  static std::string data_path(const json& cfg)
  {
    if (!cfg.contains("data") || !cfg["data"].contains("path"))
      usage_error("no input data given (--data or data.path in the config)");
    const std::string p = cfg["data"]["path"].get<std::string>();
    if (!fs::exists(p))
      usage_error("input file '" + p + "' does not exist");
    return p;
  }

  static std::string schema(const json& cfg)
  {
    if (cfg.contains("data") && cfg["data"].contains("schema"))
      return cfg["data"]["schema"].dump();
    return "{}";
  }
};

json pick(const json& cfg, std::initializer_list<const char*> keys)
{
  json out = json::object();
  for (const char* k : keys)
    if (cfg.contains(k))
      out[k] = cfg[k];
  return out;
}

bool report_converged(const std::string& report)
{
  const json r = json::parse(report);
  if (r.contains("converged"))
    return r["converged"].get<bool>();
  if (r.contains("report"))
    return r["report"]["converged"].get<bool>();
  return true;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Hidden Markov models with tensor-product spline emission densities" };
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<unsigned> threads;
  std::string config_path;
  bool force = false;
  std::optional<std::uint64_t> seed;
  app.add_option("--threads", threads, "worker threads (default: machine parallelism)");
  app.add_option("--config", config_path, "JSON config file; flags override its values");
  app.add_flag("--force", force, "overwrite existing outputs");
  app.add_option("--seed", seed, "RNG seed for every random stream");

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate runs of a scenario");
  std::string sim_out;
  std::optional<int> sim_runs, sim_length;
  std::optional<std::string> sim_family;
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--runs", sim_runs, "number of runs");
  sim->add_option("--length", sim_length, "observations per run");
  sim->add_option("--scenario", sim_family, "copula-gamma or gaussian");

  // fit
  auto* fitc = app.add_subcommand("fit", "fit a model");
  DataFlags fit_data;
  ModelFlags fit_model;
  std::string fit_out, fit_report, fit_init;
  bool allow_nonconverged = false;
  fit_data.add(fitc);
  fit_model.add(fitc);
  fitc->add_option("--out", fit_out, "model artifact to write")->required();
  fitc->add_option("--report", fit_report, "fit report JSON (default: <out>.report.json)");
  fitc->add_option("--init", fit_init, "start from a saved model")->check(CLI::ExistingFile);
  fitc->add_flag("--allow-nonconverged", allow_nonconverged, "exit 0 even if the optimizer did not converge");

  // cv
  auto* cvc = app.add_subcommand("cv", "select basis counts by cross-validation");
  DataFlags cv_data;
  ModelFlags cv_model;
  std::string cv_table, cv_out;
  std::optional<std::string> cv_candidates, cv_mode;
  std::optional<int> cv_folds;
  bool cv_allow = false;
  cv_data.add(cvc);
  cv_model.add(cvc);
  cvc->add_option("--table", cv_table, "CV table CSV to write")->required();
  cvc->add_option("--out", cv_out, "selected model artifact to write");
  cvc->add_option("--candidates", cv_candidates, "basis counts, e.g. 7-15");
  cvc->add_option("--folds", cv_folds, "number of folds");
  cvc->add_option("--mode", cv_mode, "within-sequence or between-sequence");
  cvc->add_flag("--allow-nonconverged", cv_allow, "exit 0 even if the final fit did not converge");

  // decode
  auto* dec = app.add_subcommand("decode", "Viterbi-decode a dataset");
  std::string dec_model, dec_data, dec_out;
  dec->add_option("--model", dec_model, "model artifact")->required()->check(CLI::ExistingFile);
  dec->add_option("--data", dec_data, "input CSV (model's schema applies)")->required();
  dec->add_option("--out", dec_out, "decoded states CSV")->required();

  // export-density
  auto* exp = app.add_subcommand("export-density", "export state densities on a grid");
  std::string exp_model, exp_out;
  std::optional<std::string> exp_points, exp_curve_cov;
  std::optional<double> exp_curve_lo, exp_curve_hi;
  std::optional<int> exp_curve_points;
  exp->add_option("--model", exp_model, "model artifact")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", exp_out, "output directory")->required();
  exp->add_option("--points", exp_points, "grid points per dimension, e.g. 100 or 100,80");
  exp->add_option("--curve-covariate", exp_curve_cov, "covariate for the steady-state curve");
  exp->add_option("--curve-lo", exp_curve_lo, "curve lower bound");
  exp->add_option("--curve-hi", exp_curve_hi, "curve upper bound");
  exp->add_option("--curve-points", exp_curve_points, "curve grid points");

  // study
  auto* stu = app.add_subcommand("study", "run a simulation study");
  std::string stu_out;
  std::optional<int> stu_runs, stu_length;
  std::optional<std::string> stu_family, stu_candidates;
  stu->add_option("--out", stu_out, "output directory")->required();
  stu->add_option("--runs", stu_runs, "number of runs");
  stu->add_option("--length", stu_length, "observations per run");
  stu->add_option("--scenario", stu_family, "copula-gamma or gaussian");
  stu->add_option("--candidates", stu_candidates, "CV basis counts, e.g. 7-15");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    json cfg = config_path.empty() ? json::object() : read_json_file(config_path);
    if (!cfg.is_object())
      usage_error("config root must be a JSON object");
    if (threads)
      cfg["threads"] = *threads;
    if (seed)
      cfg["seed"] = *seed;
    check(nphmm_set_threads(cfg.value("threads", 0)));

    // A global seed fills every stream that the config leaves unset; --seed overrides them all.
    auto seed_into = [&](json& target) {
      if (!cfg.contains("seed"))
        return;
      if (seed || !target.contains("seed"))
        target["seed"] = cfg["seed"];
    };

    if (sim->parsed()) {
      json& sc = section(cfg, "scenario");
      if (sim_runs)
        sc["runs"] = *sim_runs;
      if (sim_length)
        sc["length"] = *sim_length;
      if (sim_family)
        sc["family"] = *sim_family;
      seed_into(sc);
      const int runs = sc.value("runs", 100);
      if (runs < 1)
        usage_error("runs must be >= 1");
      const int width = std::max(3, static_cast<int>(std::to_string(runs).size()));
      std::vector<fs::path> targets;
      for (int r = 1; r <= runs; ++r) {
        std::string num = std::to_string(r);
        num.insert(0, static_cast<std::size_t>(width) - num.size(), '0');
        targets.push_back(fs::path(sim_out) / ("run_" + num + "_observations.csv"));
        targets.push_back(fs::path(sim_out) / ("run_" + num + "_states.csv"));
      }
      ensure_writable(targets, force);
      const std::string scenario = sc.dump();
      for (int r = 0; r < runs; ++r) {
        CString obs, states;
        check(nphmm_simulate(scenario.c_str(), r, &obs.p, &states.p));
        write_file(targets[2 * r], obs.str());
        write_file(targets[2 * r + 1], states.str());
      }
      std::cout << "wrote " << runs << " runs to " << sim_out << "\n";
      return kExitOk;
    }

    if (fitc->parsed()) {
      fit_data.apply(cfg);
      fit_model.apply(cfg);
      seed_into(section(cfg, "optimizer"));
      const std::string data_path = DataFlags::data_path(cfg);
      if (fit_report.empty())
        fit_report = fit_out + ".report.json";
      ensure_writable({ fit_out, fit_report }, force);

      ModelPtr init;
      DatasetPtr data;
      if (!fit_init.empty()) {
        check(nphmm_model_load(fit_init.c_str(), &init.p));
        check(nphmm_dataset_load_csv_for_model(data_path.c_str(), init.p, &data.p));
      } else {
        check(nphmm_dataset_load_csv(data_path.c_str(), DataFlags::schema(cfg).c_str(), &data.p));
      }
      ModelPtr model;
      CString report;
      const std::string fit_cfg = pick(cfg, { "model", "optimizer" }).dump();
      check(nphmm_fit(data.p, fit_cfg.c_str(), init.p, &model.p, &report.p));
      check(nphmm_model_save(model.p, fit_out.c_str(), force ? 1 : 0));
      write_file(fit_report, report.str() + "\n");
      const json r = json::parse(report.str());
      std::cout << "log-likelihood " << r["log_likelihood"].dump() << " (" << r["status"].get<std::string>()
                << ", " << r["iterations"].get<int>() << " iterations)\n";
      if (!r["converged"].get<bool>() && !allow_nonconverged) {
        std::cerr << "error: optimizer did not converge (use --allow-nonconverged to accept)\n";
        return kExitModel;
      }
      return kExitOk;
    }

    if (cvc->parsed()) {
      cv_data.apply(cfg);
      cv_model.apply(cfg);
      json& cv = section(cfg, "cv");
      if (cv_candidates)
        cv["candidates"] = parse_int_list(*cv_candidates);
      if (cv_folds)
        cv["n_folds"] = *cv_folds;
      if (cv_mode)
        cv["mode"] = *cv_mode;
      seed_into(cv);
      seed_into(section(cfg, "optimizer"));
      const std::string data_path = DataFlags::data_path(cfg);
      std::vector<fs::path> targets{ cv_table };
      if (!cv_out.empty()) {
        targets.emplace_back(cv_out);
        targets.emplace_back(cv_out + ".report.json");
      }
      ensure_writable(targets, force);

      DatasetPtr data;
      check(nphmm_dataset_load_csv(data_path.c_str(), DataFlags::schema(cfg).c_str(), &data.p));
      CString table, report;
      ModelPtr selected;
      const std::string cv_cfg = pick(cfg, { "model", "optimizer", "cv" }).dump();
      check(nphmm_cross_validate(data.p, cv_cfg.c_str(), &table.p, cv_out.empty() ? nullptr : &selected.p,
                                 &report.p));
      write_file(cv_table, table.str());
      const json r = json::parse(report.str());
      std::cout << "selected basis counts " << r["selected"].dump() << "\n";
      if (!cv_out.empty()) {
        check(nphmm_model_save(selected.p, cv_out.c_str(), force ? 1 : 0));
        write_file(cv_out + ".report.json", report.str() + "\n");
        if (!report_converged(report.str()) && !cv_allow) {
          std::cerr << "error: final fit did not converge (use --allow-nonconverged to accept)\n";
          return kExitModel;
        }
      }
      return kExitOk;
    }

    if (dec->parsed()) {
      ensure_writable({ dec_out }, force);
      if (!fs::exists(dec_data))
        usage_error("input file '" + dec_data + "' does not exist");
      ModelPtr model;
      check(nphmm_model_load(dec_model.c_str(), &model.p));
      DatasetPtr data;
      check(nphmm_dataset_load_csv_for_model(dec_data.c_str(), model.p, &data.p));
      CString csv;
      check(nphmm_decode(model.p, data.p, &csv.p));
      write_file(dec_out, csv.str());
      return kExitOk;
    }

    if (exp->parsed()) {
      json& grid = section(cfg, "grid");
      if (exp_points)
        grid["points"] = parse_int_list(*exp_points);
      json curve = cfg.contains("curve") ? cfg["curve"] : json::object();
      if (exp_curve_cov)
        curve["covariate"] = *exp_curve_cov;
      if (exp_curve_lo)
        curve["lo"] = *exp_curve_lo;
      if (exp_curve_hi)
        curve["hi"] = *exp_curve_hi;
      if (exp_curve_points)
        curve["points"] = *exp_curve_points;

      ModelPtr model;
      check(nphmm_model_load(exp_model.c_str(), &model.p));
      int n_states = 0, has_cov = 0;
      check(nphmm_model_info(model.p, &n_states, nullptr, nullptr, &has_cov));
      const bool want_curve = !curve.empty();
      if (want_curve && !has_cov)
        usage_error("steady-state curves need a model with covariate-dependent transitions");
      std::vector<fs::path> targets;
      for (int i = 1; i <= n_states; ++i)
        targets.push_back(fs::path(exp_out) / ("density_state" + std::to_string(i) + ".csv"));
      if (want_curve)
        targets.push_back(fs::path(exp_out) / "steady_state.csv");
      ensure_writable(targets, force);
      const std::string grid_text = grid.dump();
      for (int i = 0; i < n_states; ++i) {
        CString csv;
        check(nphmm_export_density(model.p, grid_text.c_str(), i, &csv.p));
        write_file(targets[i], csv.str());
      }
      if (want_curve) {
        CString csv;
        check(nphmm_steady_state_curve(model.p, curve.dump().c_str(), &csv.p));
        write_file(targets.back(), csv.str());
      }
      return kExitOk;
    }

    if (stu->parsed()) {
      json study = cfg.contains("study") ? cfg["study"] : json::object();
      if (!study.is_object())
        usage_error("config: 'study' must be an object");
      for (const char* k : { "scenario", "model", "optimizer", "cv" })
        if (cfg.contains(k) && !study.contains(k))
          study[k] = cfg[k];
      json& sc = section(study, "scenario");
      if (stu_runs)
        sc["runs"] = *stu_runs;
      if (stu_length)
        sc["length"] = *stu_length;
      if (stu_family)
        sc["family"] = *stu_family;
      if (stu_candidates)
        section(study, "cv")["candidates"] = parse_int_list(*stu_candidates);
      seed_into(sc);
      seed_into(section(study, "optimizer"));
      seed_into(section(study, "cv"));
      const fs::path dir(stu_out);
      const std::vector<fs::path> targets{ dir / "fits.csv", dir / "summary.csv", dir / "cv.csv",
                                           dir / "config.json" };
      ensure_writable(targets, force);
      CString fits, summary, cvcsv;
      check(nphmm_run_study(study.dump().c_str(), &fits.p, &summary.p, &cvcsv.p));
      write_file(targets[0], fits.str());
      write_file(targets[1], summary.str());
      write_file(targets[2], cvcsv.str());
      write_file(targets[3], study.dump(2) + "\n");
      std::cout << summary.str();
      return kExitOk;
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const json::exception& e) {
    std::cerr << "error: invalid configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
