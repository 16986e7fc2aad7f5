#pragma once

#include "nphmm/hmm.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace nphmm {

struct DatasetSchema
{
  std::string sequence_column = "sequence";
  std::vector<std::string> observation_columns;
  std::vector<std::string> covariate_columns;
  //! Each pair (a, b) appends the covariate column "a:b" = a * b.
  std::vector<std::pair<std::string, std::string>> interactions;
  //! Columns (observation or covariate) standardized to mean 0, sd 1.
  std::vector<std::string> standardize;
  //! Optional categorical column; accepted and ignored by the model.
  std::string category_column;

  void validate() const;
  //! Covariate names in model order: plain columns then interactions.
  std::vector<std::string> covariate_names() const;
};

//! Per-column (mean, sd) used for standardization (sd uses n - 1).
using Standardization = std::map<std::string, std::pair<double, double>>;

struct Dataset
{
  DatasetSchema schema;
  SequenceSet data;
  Standardization standardization;
};

//! Loads a CSV with header row. Rows are grouped by the sequence column in
//! order of first appearance; row order within a group is time order. Empty
//! observation cells mark a missing time point (all or none per row).
//! An empty observation column list takes every column not otherwise named.
//! With `fixed` set, its constants are applied instead of being estimated.
Dataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema,
                     const Standardization* fixed = nullptr);

//! Same, from CSV text.
Dataset parse_dataset(const std::string& csv, const DatasetSchema& schema,
                      const Standardization* fixed = nullptr, const std::string& source = "<string>");

struct ModelArtifact
{
  HmmModel model;
  DatasetSchema schema;
  Standardization standardization;
  nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const HmmModel& model);
HmmModel model_from_json(const nlohmann::json& j);

nlohmann::json schema_to_json(const DatasetSchema& schema);
DatasetSchema schema_from_json(const nlohmann::json& j);

nlohmann::json artifact_to_json(const ModelArtifact& artifact);
ModelArtifact artifact_from_json(const nlohmann::json& j);

//! Refuses to replace an existing file unless force is set.
void save_model(const ModelArtifact& artifact, const std::filesystem::path& path, bool force = false);
ModelArtifact load_model(const std::filesystem::path& path);

//! Writes text to path; refuses to overwrite unless force.
void write_text_file(const std::filesystem::path& path, const std::string& text, bool force);
std::string read_text_file(const std::filesystem::path& path);

//! Shortest round-trip decimal representation.
std::string format_double(double v);

} // namespace nphmm
