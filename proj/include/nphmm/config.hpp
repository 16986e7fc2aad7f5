#pragma once

#include "nphmm/data_io.hpp"
#include "nphmm/estimation.hpp"
#include "nphmm/evaluation.hpp"
#include "nphmm/simulation.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nphmm {

// JSON readers start from `base` and override only the keys present.
// Unknown keys are rejected so typos do not pass silently.

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
nlohmann::json to_json(const ModelConfig& c);

OptimizerConfig optimizer_config_from_json(const nlohmann::json& j, OptimizerConfig base = {});
nlohmann::json to_json(const OptimizerConfig& c);

CvPlan cv_plan_from_json(const nlohmann::json& j, CvPlan base = {});
nlohmann::json to_json(const CvPlan& c);

//! Missing "states" selects the default parameters of the chosen family.
ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioConfig& c);

//! Evaluation grid for exported densities.
struct GridSpec
{
  std::vector<int> points{ 100 };
  //! Per-dimension bounds; empty means the model's default box.
  std::vector<std::pair<double, double>> bounds;
};

GridSpec grid_spec_from_json(const nlohmann::json& j, GridSpec base = {});

//! One covariate varied over [lo, hi]; the others held at `fixed`
//! (default: the model's covariate centers).
struct CurveSpec
{
  std::string covariate;
  double lo = -2.0;
  double hi = 2.0;
  int points = 101;
  std::map<std::string, double> fixed;
};

CurveSpec curve_spec_from_json(const nlohmann::json& j);

//! Rejects keys of `j` not listed in `allowed`.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where);

} // namespace nphmm
