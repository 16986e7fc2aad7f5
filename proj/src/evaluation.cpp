#include "nphmm/evaluation.hpp"

#include "nphmm/error.hpp"
#include "nphmm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace nphmm {

double kld(const DensityFn& p, const DensityFn& q, std::span<const GridAxis> grid)
{
  require(!grid.empty(), "kld: grid needs at least one axis");
  std::size_t total = 1;
  for (const auto& ax : grid) {
    require(ax.count >= 2 && ax.lo < ax.hi, "kld: each axis needs count >= 2 and lo < hi");
    total *= static_cast<std::size_t>(ax.count);
  }
  const int D = static_cast<int>(grid.size());
  std::vector<int> idx(D, 0);
  std::vector<double> y(D);
  double sum = 0.0;
  for (std::size_t r = 0; r < total; ++r) {
    double w = 1.0;
    for (int d = 0; d < D; ++d) {
      y[d] = grid[d].at(idx[d]);
      const double h = (grid[d].hi - grid[d].lo) / (grid[d].count - 1);
      w *= (idx[d] == 0 || idx[d] == grid[d].count - 1) ? 0.5 * h : h;
    }
    const double pv = p(y);
    if (pv > 0.0) {
      const double qv = std::max(q(y), 1e-300);
      sum += w * pv * (std::log(pv) - std::log(qv));
    }
    for (int d = D - 1; d >= 0; --d) {
      if (++idx[d] < grid[d].count)
        break;
      idx[d] = 0;
    }
  }
  return sum;
}

namespace {

int label_count(std::span<const int> a, std::span<const int> b)
{
  int k = 0;
  for (int v : a) {
    require(v >= 0, "state labels must be nonnegative");
    k = std::max(k, v + 1);
  }
  for (int v : b) {
    require(v >= 0, "state labels must be nonnegative");
    k = std::max(k, v + 1);
  }
  return k;
}

} // namespace

std::vector<int> best_alignment(std::span<const int> truth, std::span<const int> decoded, int n_states)
{
  if (truth.size() != decoded.size())
    fail(ErrorCode::dimension_mismatch, "paths must have equal length");
  const int K = std::max(n_states, label_count(truth, decoded));
  require(K <= 9, "label alignment is exhaustive and limited to 9 states");
  // confusion(a, b): decoded a, truth b
  std::vector<std::vector<long>> conf(K, std::vector<long>(K, 0));
  for (std::size_t t = 0; t < truth.size(); ++t)
    ++conf[decoded[t]][truth[t]];
  std::vector<int> map(K);   // map[old decoded label] = new label
  std::iota(map.begin(), map.end(), 0);
  std::vector<int> best_map = map;
  long best = -1;
  do {
    long agree = 0;
    for (int a = 0; a < K; ++a)
      agree += conf[a][map[a]];
    if (agree > best) {
      best = agree;
      best_map = map;
    }
  } while (std::next_permutation(map.begin(), map.end()));
  std::vector<int> perm(K);
  for (int a = 0; a < K; ++a)
    perm[best_map[a]] = a;
  perm.resize(n_states);
  return perm;
}

double decoding_accuracy(std::span<const int> truth, std::span<const int> decoded)
{
  if (truth.size() != decoded.size())
    fail(ErrorCode::dimension_mismatch, "paths must have equal length");
  require(!truth.empty(), "paths must not be empty");
  const int K = label_count(truth, decoded);
  std::vector<int> perm = best_alignment(truth, decoded, K);
  std::vector<int> relabel(K);
  for (int k = 0; k < K; ++k)
    relabel[perm[k]] = k;
  std::size_t agree = 0;
  for (std::size_t t = 0; t < truth.size(); ++t)
    agree += relabel[decoded[t]] == truth[t] ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(truth.size());
}

DensityCheck check_emission(const TensorEmission& emission, int grid_points, double tol)
{
  DensityCheck c;
  c.integral = emission.integral();
  std::vector<GridAxis> grid;
  for (const auto& b : emission.bases())
    grid.push_back({ b.support_lo(), b.support_hi(), grid_points });
  std::vector<double> values = emission.density_grid(grid);
  c.min_value = *std::min_element(values.begin(), values.end());
  c.ok = std::abs(c.integral - 1.0) <= tol && c.min_value >= 0.0;
  return c;
}

const char* to_string(CvMode mode)
{
  return mode == CvMode::within_sequence ? "within-sequence" : "between-sequence";
}

CvMode cv_mode_from_string(const std::string& name)
{
  if (name == "within-sequence" || name == "within")
    return CvMode::within_sequence;
  if (name == "between-sequence" || name == "between")
    return CvMode::between_sequence;
  fail(ErrorCode::invalid_argument, "unknown cross-validation mode '" + name + "'");
}

std::vector<std::vector<int>> CvPlan::uniform_candidates(std::span<const int> counts)
{
  std::vector<std::vector<int>> out;
  for (int c : counts)
    out.push_back({ c });
  return out;
}

void CvPlan::validate(const SequenceSet& data) const
{
  require(!candidates.empty(), "cross-validation needs at least one candidate basis count");
  for (const auto& c : candidates) {
    require(c.size() == 1 || static_cast<int>(c.size()) == data.dim,
            "candidate basis counts need one entry or one per dimension");
    for (int n : c)
      require(n >= SplineBasis::kOrder, "candidate basis counts must be >= 4");
  }
  require(n_folds >= 1, "cross-validation needs at least one fold");
  require(fit_restarts >= 0, "fit restarts must be nonnegative");
  if (mode == CvMode::within_sequence) {
    require(holdout > 0.0 && holdout <= 0.5, "holdout fraction must lie in (0, 0.5]");
  } else {
    require(n_folds >= 2, "between-sequence cross-validation needs at least 2 folds");
    require(static_cast<int>(data.sequences.size()) >= n_folds,
            "between-sequence cross-validation needs at least as many sequences as folds");
  }
}

std::vector<std::vector<std::pair<int, int>>> make_folds(const SequenceSet& data, const CvPlan& plan)
{
  plan.validate(data);
  std::vector<std::vector<std::pair<int, int>>> folds(plan.n_folds);
  if (plan.mode == CvMode::within_sequence) {
    std::vector<std::pair<int, int>> observed;
    for (int m = 0; m < static_cast<int>(data.sequences.size()); ++m)
      for (int t = 0; t < data.sequences[m].length(); ++t)
        if (!data.sequences[m].missing[t])
          observed.emplace_back(m, t);
    const std::size_t k = static_cast<std::size_t>(std::llround(plan.holdout * observed.size()));
    require(k >= 1 && k < observed.size(), "holdout leaves no test or no training points");
    for (int f = 0; f < plan.n_folds; ++f) {
      std::mt19937_64 rng(derive_seed(plan.seed, 0x666f6c64ULL, static_cast<std::uint64_t>(f)));
      std::vector<std::pair<int, int>> pool = observed;
      // Partial Fisher-Yates: the first k entries form the held-out set.
      for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
      pool.resize(k);
      std::sort(pool.begin(), pool.end());
      folds[f] = std::move(pool);
    }
  } else {
    std::vector<int> order(data.sequences.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(plan.seed, 0x736571ULL));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    for (std::size_t i = 0; i < order.size(); ++i)
      folds[i % plan.n_folds].emplace_back(order[i], -1);
    for (auto& f : folds)
      std::sort(f.begin(), f.end());
  }
  return folds;
}

std::size_t select_candidate(std::span<const CvRow> rows)
{
  bool found = false;
  std::size_t best = 0;
  for (std::size_t c = 0; c < rows.size(); ++c) {
    if (rows[c].disqualified)
      continue;
    if (!found || rows[c].mean_score > rows[best].mean_score) {
      best = c;
      found = true;
    }
  }
  if (!found)
    fail(ErrorCode::fit_failure, "cross-validation: every candidate was disqualified");
  return best;
}

CvResult cross_validate(const SequenceSet& data, const CvPlan& plan, const ModelConfig& model,
                        const OptimizerConfig& optimizer)
{
  data.validate();
  require(model.family == EmissionFamily::spline, "cross-validation selects spline basis counts");
  auto folds = make_folds(data, plan);

  std::vector<std::vector<int>> candidates = plan.candidates;
  std::stable_sort(candidates.begin(), candidates.end(), [&](const auto& a, const auto& b) {
    auto expand = [&](const std::vector<int>& c) {
      return c.size() == 1 ? std::vector<int>(data.dim, c[0]) : c;
    };
    auto ea = expand(a);
    auto eb = expand(b);
    const long pa = std::accumulate(ea.begin(), ea.end(), 1L, std::multiplies<>());
    const long pb = std::accumulate(eb.begin(), eb.end(), 1L, std::multiplies<>());
    return pa != pb ? pa < pb : ea < eb;
  });

  CvResult result;
  ModelConfig base = model;
  if (base.support.empty()) {
    Eigen::MatrixXd pooled = data.pooled_observations();
    for (int d = 0; d < data.dim; ++d) {
      std::vector<double> col(pooled.col(d).data(), pooled.col(d).data() + pooled.rows());
      base.support.push_back(support_from_data(col, base.support_margin));
    }
  }
  result.support = base.support;

  // Training sets and test sets per fold.
  const std::size_t F = folds.size();
  std::vector<SequenceSet> train(F);
  std::vector<SequenceSet> test(F);
  for (std::size_t f = 0; f < F; ++f) {
    if (plan.mode == CvMode::within_sequence) {
      train[f] = data;
      for (auto [m, t] : folds[f])
        train[f].sequences[m].missing[t] = 1;
    } else {
      train[f].dim = test[f].dim = data.dim;
      train[f].n_covariates = test[f].n_covariates = data.n_covariates;
      std::vector<bool> held(data.sequences.size(), false);
      for (auto [m, t] : folds[f])
        held[m] = true;
      for (std::size_t m = 0; m < data.sequences.size(); ++m)
        (held[m] ? test[f] : train[f]).sequences.push_back(data.sequences[m]);
    }
  }

  const std::size_t C = candidates.size();
  std::vector<double> scores(C * F, std::numeric_limits<double>::quiet_NaN());
  std::vector<unsigned char> converged(C * F, 0);
  std::vector<unsigned char> checked(C * F, 0);
  std::vector<unsigned char> check_failed(C * F, 0);

  parallel_for(C * F, [&](std::size_t task) {
    const std::size_t c = task / F;
    const std::size_t f = task % F;
    ModelConfig cfg = base;
    cfg.basis_counts = candidates[c];
    OptimizerConfig opt = optimizer;
    opt.restarts = plan.fit_restarts;
    opt.seed = derive_seed(plan.seed, 0x666974ULL, f);
    try {
      FitResult fr = fit_model(train[f], cfg, opt);
      converged[task] = fr.report.converged ? 1 : 0;
      if (plan.check_densities) {
        checked[task] = 1;
        for (const auto& e : std::get<std::vector<TensorEmission>>(fr.model.emissions()))
          if (!check_emission(e).ok)
            check_failed[task] = 1;
      }
      double score;
      if (plan.mode == CvMode::within_sequence) {
        score = 0.0;
        std::vector<bool> touched(data.sequences.size(), false);
        for (auto [m, t] : folds[f])
          touched[m] = true;
        for (std::size_t m = 0; m < data.sequences.size(); ++m)
          if (touched[m])
            score += log_likelihood(fr.model, data.sequences[m]) -
                     log_likelihood(fr.model, train[f].sequences[m]);
      } else {
        score = joint_log_likelihood(fr.model, test[f]);
      }
      if (std::isfinite(score))
        scores[task] = score;
    } catch (const Error&) {
      // recorded as a failed fold
    }
  });

  for (std::size_t c = 0; c < C; ++c) {
    CvRow row;
    row.counts = candidates[c];
    double sum = 0.0;
    int ok = 0;
    for (std::size_t f = 0; f < F; ++f) {
      const std::size_t task = c * F + f;
      row.fold_scores.push_back(scores[task]);
      if (std::isnan(scores[task])) {
        ++row.failed_folds;
      } else {
        sum += scores[task];
        ++ok;
        if (!converged[task])
          ++row.nonconverged_folds;
      }
      result.density_checks += checked[task];
      result.density_check_failures += check_failed[task];
    }
    row.disqualified = 2 * row.failed_folds > static_cast<int>(F);
    row.mean_score = ok > 0 ? sum / ok : -std::numeric_limits<double>::infinity();
    result.rows.push_back(std::move(row));
  }

  result.selected = select_candidate(result.rows);
  return result;
}

} // namespace nphmm
