#include "nphmm/data_io.hpp"

#include "nphmm/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace nphmm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v)
{
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc())
    fail(ErrorCode::internal, "failed to format a number");
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Schema

void DatasetSchema::validate() const
{
  require(!sequence_column.empty(), "schema: sequence column name must not be empty");
  require(!observation_columns.empty(), "schema: at least one observation column is required");
  std::set<std::string> names{ sequence_column };
  auto add = [&](const std::string& n) {
    require(!n.empty(), "schema: column names must not be empty");
    require(names.insert(n).second, "schema: duplicate column name '" + n + "'");
  };
  for (const auto& c : observation_columns)
    add(c);
  for (const auto& c : covariate_columns)
    add(c);
  if (!category_column.empty())
    add(category_column);
  std::set<std::string> covs(covariate_columns.begin(), covariate_columns.end());
  for (const auto& [a, b] : interactions) {
    require(covs.count(a) && covs.count(b),
            "schema: interaction terms must name covariate columns ('" + a + "', '" + b + "')");
    add(a + ":" + b);
  }
  for (const auto& s : standardize)
    require(std::find(observation_columns.begin(), observation_columns.end(), s) != observation_columns.end() ||
              covs.count(s),
            "schema: standardized column '" + s + "' is not an observation or covariate column");
}

std::vector<std::string> DatasetSchema::covariate_names() const
{
  std::vector<std::string> out = covariate_columns;
  for (const auto& [a, b] : interactions)
    out.push_back(a + ":" + b);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(std::string_view s)
{
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r'))
    ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r'))
    --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_number(const std::string& cell, std::size_t line, const std::string& column,
                    const std::string& source)
{
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  if (!cell.empty() && *b == '+')
    ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (cell.empty() || ec != std::errc() || ptr != e || !std::isfinite(v))
    fail(ErrorCode::parse_error, source + ":" + std::to_string(line) + ": column '" + column +
                                   "': non-numeric value '" + cell + "'");
  return v;
}

} // namespace

Dataset parse_dataset(const std::string& csv, const DatasetSchema& schema_in, const Standardization* fixed,
                      const std::string& source)
{
  DatasetSchema schema = schema_in;
  std::istringstream in(csv);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty())
    fail(ErrorCode::parse_error, source + ": empty file (no header row)");
  if (schema.observation_columns.empty()) {
    for (const auto& h : header) {
      const bool named = h == schema.sequence_column || h == schema.category_column ||
                         std::find(schema.covariate_columns.begin(), schema.covariate_columns.end(), h) !=
                           schema.covariate_columns.end();
      if (!named)
        schema.observation_columns.push_back(h);
    }
  }
  schema.validate();

  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i)
    col.emplace(header[i], i);
  auto index_of = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end())
      fail(ErrorCode::parse_error, source + ": missing column '" + name + "'");
    return it->second;
  };
  const std::size_t seq_col = index_of(schema.sequence_column);
  std::vector<std::size_t> obs_cols;
  for (const auto& c : schema.observation_columns)
    obs_cols.push_back(index_of(c));
  std::vector<std::size_t> cov_cols;
  for (const auto& c : schema.covariate_columns)
    cov_cols.push_back(index_of(c));
  if (!schema.category_column.empty())
    index_of(schema.category_column);

  const std::size_t D = obs_cols.size();
  const std::size_t P = cov_cols.size();

  struct Row
  {
    std::vector<double> obs;
    bool missing;
    std::vector<double> cov;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> groups;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty())
      continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      fail(ErrorCode::parse_error, source + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " fields, found " +
                                     std::to_string(cells.size()));
    Row r;
    r.obs.resize(D);
    std::size_t empty = 0;
    for (std::size_t d = 0; d < D; ++d) {
      const std::string& cell = cells[obs_cols[d]];
      if (cell.empty() || cell == "NA" || cell == "NaN") {
        ++empty;
        r.obs[d] = std::numeric_limits<double>::quiet_NaN();
      } else {
        r.obs[d] = parse_number(cell, line_no, schema.observation_columns[d], source);
      }
    }
    if (empty != 0 && empty != D)
      fail(ErrorCode::parse_error, source + ":" + std::to_string(line_no) +
                                     ": partially missing observation vectors are not supported");
    r.missing = empty == D;
    r.cov.resize(P);
    for (std::size_t l = 0; l < P; ++l)
      r.cov[l] = parse_number(cells[cov_cols[l]], line_no, schema.covariate_columns[l], source);
    const std::string& id = cells[seq_col];
    if (id.empty())
      fail(ErrorCode::parse_error, source + ":" + std::to_string(line_no) + ": empty sequence id");
    auto [it, inserted] = groups.try_emplace(id);
    if (inserted)
      order.push_back(id);
    it->second.push_back(std::move(r));
  }
  if (order.empty())
    fail(ErrorCode::parse_error, source + ": no data rows");

  Dataset ds;
  ds.schema = schema;

  // Standardization constants.
  auto wants = [&](const std::string& c) {
    return std::find(schema.standardize.begin(), schema.standardize.end(), c) != schema.standardize.end();
  };
  auto column_values = [&](bool is_obs, std::size_t k) {
    std::vector<double> v;
    for (const auto& id : order)
      for (const auto& r : groups[id])
        if (is_obs) {
          if (!r.missing)
            v.push_back(r.obs[k]);
        } else {
          v.push_back(r.cov[k]);
        }
    return v;
  };
  auto constants_for = [&](const std::string& name, bool is_obs, std::size_t k) -> std::pair<double, double> {
    if (fixed) {
      auto it = fixed->find(name);
      if (it == fixed->end())
        fail(ErrorCode::invalid_argument, "no stored standardization constants for column '" + name + "'");
      return it->second;
    }
    auto v = column_values(is_obs, k);
    require(v.size() >= 2, "column '" + name + "' needs at least two values to standardize");
    double mean = 0.0;
    for (double x : v)
      mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v)
      ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    require(sd > 0.0, "column '" + name + "' is constant and cannot be standardized");
    return { mean, sd };
  };
  std::vector<std::pair<double, double>> obs_std(D, { 0.0, 1.0 });
  std::vector<std::pair<double, double>> cov_std(P, { 0.0, 1.0 });
  for (std::size_t d = 0; d < D; ++d)
    if (wants(schema.observation_columns[d])) {
      obs_std[d] = constants_for(schema.observation_columns[d], true, d);
      ds.standardization[schema.observation_columns[d]] = obs_std[d];
    }
  for (std::size_t l = 0; l < P; ++l)
    if (wants(schema.covariate_columns[l])) {
      cov_std[l] = constants_for(schema.covariate_columns[l], false, l);
      ds.standardization[schema.covariate_columns[l]] = cov_std[l];
    }

  std::unordered_map<std::string, std::size_t> cov_index;
  for (std::size_t l = 0; l < P; ++l)
    cov_index[schema.covariate_columns[l]] = l;
  const std::size_t P_total = P + schema.interactions.size();

  ds.data.dim = static_cast<int>(D);
  ds.data.n_covariates = static_cast<int>(P_total);
  for (const auto& id : order) {
    const auto& rows = groups[id];
    const Eigen::Index T = static_cast<Eigen::Index>(rows.size());
    Sequence s;
    s.id = id;
    s.observations = Eigen::MatrixXd::Zero(T, static_cast<Eigen::Index>(D));
    s.missing.assign(rows.size(), 0);
    s.covariates = Eigen::MatrixXd::Zero(T, static_cast<Eigen::Index>(P_total));
    for (Eigen::Index t = 0; t < T; ++t) {
      const Row& r = rows[t];
      s.missing[t] = r.missing ? 1 : 0;
      for (std::size_t d = 0; d < D; ++d)
        s.observations(t, static_cast<Eigen::Index>(d)) =
          r.missing ? 0.0 : (r.obs[d] - obs_std[d].first) / obs_std[d].second;
      for (std::size_t l = 0; l < P; ++l)
        s.covariates(t, static_cast<Eigen::Index>(l)) = (r.cov[l] - cov_std[l].first) / cov_std[l].second;
      for (std::size_t k = 0; k < schema.interactions.size(); ++k) {
        const auto& [a, b] = schema.interactions[k];
        s.covariates(t, static_cast<Eigen::Index>(P + k)) =
          s.covariates(t, static_cast<Eigen::Index>(cov_index[a])) *
          s.covariates(t, static_cast<Eigen::Index>(cov_index[b]));
      }
    }
    ds.data.sequences.push_back(std::move(s));
  }
  ds.data.validate();
  return ds;
}

std::string read_text_file(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorCode::io_error, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text, bool force)
{
  if (!force && fs::exists(path))
    fail(ErrorCode::already_exists, "refusing to overwrite '" + path.string() + "' (use --force)");
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    fail(ErrorCode::io_error, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out)
    fail(ErrorCode::io_error, "failed writing '" + path.string() + "'");
}

Dataset load_dataset(const fs::path& path, const DatasetSchema& schema, const Standardization* fixed)
{
  return parse_dataset(read_text_file(path), schema, fixed, path.string());
}

// ---------------------------------------------------------------------------
// Model artifact

namespace {

json matrix_to_json(const Eigen::MatrixXd& m)
{
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols)
{
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    fail(ErrorCode::corrupt_file, "matrix has the wrong number of rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols)
      fail(ErrorCode::corrupt_file, "matrix has the wrong number of columns");
    for (Eigen::Index k = 0; k < cols; ++k)
      m(i, k) = r[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j, Eigen::Index n)
{
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    fail(ErrorCode::corrupt_file, "vector has the wrong length");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

json vector_to_json(const Eigen::VectorXd& v)
{
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

} // namespace

json model_to_json(const HmmModel& model)
{
  json j;
  j["n_states"] = model.n_states();
  j["dim"] = model.dim();
  if (const auto* tm = std::get_if<TransitionMatrix>(&model.transition())) {
    j["transition"] = { { "type", "homogeneous" }, { "matrix", matrix_to_json(tm->matrix()) } };
  } else {
    const auto& c = std::get<CovariateTransition>(model.transition());
    json slopes = json::array();
    for (int l = 0; l < c.n_covariates(); ++l)
      slopes.push_back(matrix_to_json(c.slope(l)));
    j["transition"] = { { "type", "covariate" },
                        { "n_covariates", c.n_covariates() },
                        { "intercept", matrix_to_json(c.intercept()) },
                        { "slopes", slopes },
                        { "center", vector_to_json(c.center()) },
                        { "scale", vector_to_json(c.scale()) } };
  }
  j["initial"] = model.fixed_initial() ? vector_to_json(*model.fixed_initial()) : json(nullptr);
  if (const auto* spl = std::get_if<std::vector<TensorEmission>>(&model.emissions())) {
    json states = json::array();
    for (const auto& e : *spl) {
      json bases = json::array();
      for (const auto& b : e.bases())
        bases.push_back({ { "dimension", b.dimension_index() },
                          { "num_basis", b.size() },
                          { "support", { b.support_lo(), b.support_hi() } } });
      states.push_back({ { "bases", bases },
                         { "beta", std::vector<double>(e.beta().begin(), e.beta().end()) } });
    }
    j["emission"] = { { "family", "spline" }, { "states", states } };
  } else {
    json states = json::array();
    for (const auto& g : std::get<std::vector<GaussianEmission>>(model.emissions()))
      states.push_back({ { "mean", vector_to_json(g.mean()) },
                         { "covariance_factor", matrix_to_json(g.cholesky_factor()) } });
    j["emission"] = { { "family", "gaussian" }, { "states", states } };
  }
  return j;
}

HmmModel model_from_json(const json& j)
{
  try {
    const int N = j.at("n_states").get<int>();
    const int D = j.at("dim").get<int>();
    if (N < 1 || D < 1)
      fail(ErrorCode::corrupt_file, "model: n_states and dim must be positive");
    const json& tr = j.at("transition");
    TransitionModel transition = TransitionMatrix::uniform(N);
    const std::string type = tr.at("type").get<std::string>();
    if (type == "homogeneous") {
      transition = TransitionMatrix(matrix_from_json(tr.at("matrix"), N, N));
    } else if (type == "covariate") {
      const int P = tr.at("n_covariates").get<int>();
      CovariateTransition c(N, P);
      c.intercept() = matrix_from_json(tr.at("intercept"), N, N);
      const json& slopes = tr.at("slopes");
      if (!slopes.is_array() || static_cast<int>(slopes.size()) != P)
        fail(ErrorCode::corrupt_file, "model: slope count does not match n_covariates");
      for (int l = 0; l < P; ++l)
        c.slope(l) = matrix_from_json(slopes[l], N, N);
      c.set_standardization(vector_from_json(tr.at("center"), P), vector_from_json(tr.at("scale"), P));
      transition = std::move(c);
    } else {
      fail(ErrorCode::corrupt_file, "model: unknown transition type '" + type + "'");
    }

    const json& em = j.at("emission");
    const std::string family = em.at("family").get<std::string>();
    const json& states = em.at("states");
    if (!states.is_array() || static_cast<int>(states.size()) != N)
      fail(ErrorCode::corrupt_file, "model: emission state count does not match n_states");
    EmissionSet emissions;
    if (family == "spline") {
      std::vector<TensorEmission> out;
      for (const json& s : states) {
        std::vector<SplineBasis> bases;
        const json& bj = s.at("bases");
        if (!bj.is_array() || static_cast<int>(bj.size()) != D)
          fail(ErrorCode::corrupt_file, "model: need one basis per dimension");
        for (const json& b : bj) {
          const json& sup = b.at("support");
          bases.emplace_back(b.at("dimension").get<int>(), b.at("num_basis").get<int>(),
                             sup.at(0).get<double>(), sup.at(1).get<double>());
        }
        out.emplace_back(std::move(bases), s.at("beta").get<std::vector<double>>());
      }
      emissions = std::move(out);
    } else if (family == "gaussian") {
      std::vector<GaussianEmission> out;
      for (const json& s : states)
        out.push_back(GaussianEmission::from_factor(vector_from_json(s.at("mean"), D),
                                                    matrix_from_json(s.at("covariance_factor"), D, D)));
      emissions = std::move(out);
    } else {
      fail(ErrorCode::corrupt_file, "model: unknown emission family '" + family + "'");
    }
    HmmModel model(std::move(transition), std::move(emissions));
    if (j.contains("initial") && !j.at("initial").is_null())
      model.set_initial(vector_from_json(j.at("initial"), N));
    return model;
  } catch (const json::exception& e) {
    fail(ErrorCode::corrupt_file, std::string("model: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::corrupt_file)
      throw;
    fail(ErrorCode::corrupt_file, std::string("model: ") + e.what());
  }
}

json schema_to_json(const DatasetSchema& s)
{
  json inter = json::array();
  for (const auto& [a, b] : s.interactions)
    inter.push_back({ a, b });
  return { { "sequence_column", s.sequence_column },
           { "observation_columns", s.observation_columns },
           { "covariate_columns", s.covariate_columns },
           { "interactions", inter },
           { "standardize", s.standardize },
           { "category_column", s.category_column } };
}

DatasetSchema schema_from_json(const json& j)
{
  DatasetSchema s;
  s.sequence_column = j.value("sequence_column", s.sequence_column);
  s.observation_columns = j.value("observation_columns", std::vector<std::string>{});
  s.covariate_columns = j.value("covariate_columns", std::vector<std::string>{});
  if (j.contains("interactions"))
    for (const json& p : j.at("interactions")) {
      if (!p.is_array() || p.size() != 2)
        fail(ErrorCode::invalid_argument, "schema: each interaction must be a pair of column names");
      s.interactions.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
  s.standardize = j.value("standardize", std::vector<std::string>{});
  s.category_column = j.value("category_column", std::string{});
  return s;
}

json artifact_to_json(const ModelArtifact& a)
{
  json stdz = json::object();
  for (const auto& [name, ms] : a.standardization)
    stdz[name] = { ms.first, ms.second };
  return { { "format", "nphmm-model" },
           { "version", kModelFormatVersion },
           { "model", model_to_json(a.model) },
           { "schema", schema_to_json(a.schema) },
           { "standardization", stdz },
           { "metadata", a.metadata } };
}

ModelArtifact artifact_from_json(const json& j)
{
  try {
    if (!j.is_object() || j.value("format", std::string{}) != "nphmm-model")
      fail(ErrorCode::corrupt_file, "not an nphmm model artifact");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion)
      fail(ErrorCode::version_mismatch, "model artifact version " + std::to_string(version) +
                                          " is not supported (expected " +
                                          std::to_string(kModelFormatVersion) + ")");
    ModelArtifact a{ model_from_json(j.at("model")), schema_from_json(j.at("schema")), {}, json::object() };
    for (const auto& [name, v] : j.at("standardization").items())
      a.standardization[name] = { v.at(0).get<double>(), v.at(1).get<double>() };
    if (j.contains("metadata"))
      a.metadata = j.at("metadata");
    return a;
  } catch (const json::exception& e) {
    fail(ErrorCode::corrupt_file, std::string("model artifact: ") + e.what());
  }
}

void save_model(const ModelArtifact& artifact, const fs::path& path, bool force)
{
  write_text_file(path, artifact_to_json(artifact).dump(2) + "\n", force);
}

ModelArtifact load_model(const fs::path& path)
{
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::corrupt_file, "'" + path.string() + "' is not valid model JSON: " + e.what());
  }
  return artifact_from_json(j);
}

} // namespace nphmm
