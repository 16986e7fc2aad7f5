#include "nphmm/estimation.hpp"

#include "nphmm/error.hpp"
#include "nphmm/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace nphmm {

const char* to_string(EmissionFamily family)
{
  return family == EmissionFamily::spline ? "spline" : "gaussian";
}

EmissionFamily emission_family_from_string(const std::string& name)
{
  if (name == "spline" || name == "nonparametric")
    return EmissionFamily::spline;
  if (name == "gaussian" || name == "parametric")
    return EmissionFamily::gaussian;
  fail(ErrorCode::invalid_argument, "unknown emission family '" + name + "'");
}

std::vector<int> ModelConfig::counts_for(int dim) const
{
  if (basis_counts.size() == 1)
    return std::vector<int>(dim, basis_counts[0]);
  if (static_cast<int>(basis_counts.size()) != dim)
    fail(ErrorCode::dimension_mismatch, "basis_counts needs one entry or one per dimension");
  return basis_counts;
}

LbfgsSettings OptimizerConfig::lbfgs() const
{
  LbfgsSettings s;
  s.grad_tol = grad_tol;
  s.rel_tol = rel_tol;
  s.patience = patience;
  s.max_iter = max_iter;
  s.memory = memory;
  return s;
}

// ---------------------------------------------------------------------------
// Parameter packing

ParameterLayout parameter_layout(const HmmModel& model)
{
  ParameterLayout lay;
  const int N = model.n_states();
  lay.transition_size = std::visit(
    [N](const auto& t) -> std::size_t {
      using T = std::decay_t<decltype(t)>;
      if constexpr (std::is_same_v<T, TransitionMatrix>)
        return static_cast<std::size_t>(N * (N - 1));
      else
        return t.num_parameters();
    },
    model.transition());
  std::size_t offset = lay.transition_size;
  std::visit(
    [&](const auto& e) {
      for (const auto& s : e) {
        std::size_t size;
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, TensorEmission>)
          size = s.num_free();
        else
          size = GaussianEmission::num_parameters(s.dim());
        lay.state_offset.push_back(offset);
        lay.state_size.push_back(size);
        offset += size;
      }
    },
    model.emissions());
  lay.total = offset;
  return lay;
}

std::vector<double> pack_parameters(const HmmModel& model)
{
  const ParameterLayout lay = parameter_layout(model);
  std::vector<double> out(lay.total);
  std::span<double> all(out);
  if (const auto* tm = std::get_if<TransitionMatrix>(&model.transition())) {
    auto block = pack_tpm(*tm);
    std::copy(block.begin(), block.end(), out.begin());
  } else {
    std::get<CovariateTransition>(model.transition()).parameters(all.first(lay.transition_size));
  }
  std::visit(
    [&](const auto& e) {
      for (std::size_t i = 0; i < e.size(); ++i) {
        auto block = all.subspan(lay.state_offset[i], lay.state_size[i]);
        if constexpr (std::is_same_v<std::decay_t<decltype(e[i])>, TensorEmission>)
          e[i].free_beta(block);
        else
          e[i].parameters(block);
      }
    },
    model.emissions());
  return out;
}

void unpack_parameters(HmmModel& model, std::span<const double> params)
{
  const ParameterLayout lay = parameter_layout(model);
  if (params.size() != lay.total)
    fail(ErrorCode::dimension_mismatch, "parameter vector has the wrong length");
  const int N = model.n_states();
  if (auto* tm = std::get_if<TransitionMatrix>(&model.transition()))
    *tm = unpack_tpm(N, params.first(lay.transition_size));
  else
    std::get<CovariateTransition>(model.transition()).set_parameters(params.first(lay.transition_size));
  if (auto* spl = std::get_if<std::vector<TensorEmission>>(&model.emissions())) {
    for (int i = 0; i < N; ++i)
      (*spl)[i].set_free_beta(params.subspan(lay.state_offset[i], lay.state_size[i]));
  } else {
    auto& gau = std::get<std::vector<GaussianEmission>>(model.emissions());
    for (int i = 0; i < N; ++i)
      gau[i] = GaussianEmission::from_parameters(gau[i].dim(),
                                                 params.subspan(lay.state_offset[i], lay.state_size[i]));
  }
}

// ---------------------------------------------------------------------------
// Likelihood and gradient

LikelihoodEvaluator::LikelihoodEvaluator(const SequenceSet& data, const HmmModel& structure)
  : data_(data)
{
  data_.validate();
  if (data_.dim != structure.dim())
    fail(ErrorCode::dimension_mismatch, "data dimension does not match the model");
  if (const auto* spl = std::get_if<std::vector<TensorEmission>>(&structure.emissions())) {
    tables_.resize(data_.sequences.size());
    for (std::size_t m = 0; m < data_.sequences.size(); ++m) {
      const auto& s = data_.sequences[m];
      for (std::size_t i = 0; i < spl->size(); ++i) {
        // States sharing the same bases share a table.
        std::size_t same = i;
        for (std::size_t k = 0; k < i; ++k) {
          const auto& a = (*spl)[k].bases();
          const auto& b = (*spl)[i].bases();
          bool eq = a.size() == b.size();
          for (std::size_t d = 0; eq && d < a.size(); ++d)
            eq = std::equal(a[d].knots().begin(), a[d].knots().end(), b[d].knots().begin(),
                            b[d].knots().end());
          if (eq) {
            same = k;
            break;
          }
        }
        if (same == i)
          tables_[m].emplace_back((*spl)[i].bases(), s.observations, &s.missing);
        else
          tables_[m].push_back(tables_[m][same]);
      }
    }
  }
}

Eigen::MatrixXd LikelihoodEvaluator::densities(const HmmModel& model, std::size_t m) const
{
  const Sequence& s = data_.sequences[m];
  const auto* spl = std::get_if<std::vector<TensorEmission>>(&model.emissions());
  if (!spl)
    return model.density_matrix(s);
  const int T = s.length();
  const int N = model.n_states();
  Eigen::MatrixXd dens(T, N);
  for (int i = 0; i < N; ++i)
    for (int t = 0; t < T; ++t)
      dens(t, i) = s.missing[t] ? 1.0 : (*spl)[i].density(tables_[m][i], t);
  return dens;
}

double LikelihoodEvaluator::sequence_term(const HmmModel& model, std::size_t m,
                                          std::span<double> grad, bool want_grad) const
{
  const Sequence& s = data_.sequences[m];
  const int N = model.n_states();
  Eigen::MatrixXd dens = densities(model, m);
  std::vector<Eigen::MatrixXd> gammas = model.transitions(s);

  std::optional<StationarySolver> solver;
  Eigen::VectorXd delta;
  if (model.fixed_initial()) {
    delta = *model.fixed_initial();
  } else {
    solver.emplace(gammas[0]);
    delta = solver->delta();
  }

  if (!want_grad)
    return forward_log_likelihood(delta, gammas, dens);

  Posterior post = forward_backward(delta, gammas, dens);
  if (!std::isfinite(post.log_likelihood))
    return post.log_likelihood;

  const ParameterLayout lay = parameter_layout(model);

  // Transition block.
  if (const auto* tm = std::get_if<TransitionMatrix>(&model.transition())) {
    Eigen::MatrixXd g_gamma = post.gamma_sensitivity[0];
    if (solver)
      g_gamma += solver->pullback(post.initial_sensitivity);
    Eigen::MatrixXd g_nu = softmax_rows_pullback(tm->matrix(), g_gamma);
    std::size_t k = 0;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        if (i != j)
          grad[k++] += g_nu(i, j);
  } else {
    const auto& cov = std::get<CovariateTransition>(model.transition());
    auto block = grad.first(lay.transition_size);
    if (solver) {
      Eigen::MatrixXd g0 = softmax_rows_pullback(gammas[0], solver->pullback(post.initial_sensitivity));
      cov.accumulate_gradient(s.covariates_at(0), g0, block);
    }
    for (int t = 1; t < s.length(); ++t) {
      Eigen::MatrixXd g_nu = softmax_rows_pullback(gammas[t], post.gamma_sensitivity[t]);
      cov.accumulate_gradient(s.covariates_at(t), g_nu, block);
    }
  }

  // Emission blocks: d logL / d f_i(y_t) = u_t(i) / f_i(y_t).
  if (const auto* spl = std::get_if<std::vector<TensorEmission>>(&model.emissions())) {
    std::vector<double> acc;
    std::vector<double> g_state;
    for (int i = 0; i < N; ++i) {
      const TensorEmission& e = (*spl)[i];
      acc.assign(e.num_coefficients(), 0.0);
      double total = 0.0;
      for (int t = 0; t < s.length(); ++t) {
        if (s.missing[t] || !(dens(t, i) > 0.0))
          continue;
        const double u = post.state_probs(t, i);
        total += u;
        e.accumulate_basis(tables_[m][i], t, u / dens(t, i), acc);
      }
      g_state.assign(e.num_free(), 0.0);
      e.free_gradient(acc, total, g_state);
      auto block = grad.subspan(lay.state_offset[i], lay.state_size[i]);
      for (std::size_t k = 0; k < g_state.size(); ++k)
        block[k] += g_state[k];
    }
  } else {
    const auto& gau = std::get<std::vector<GaussianEmission>>(model.emissions());
    Eigen::VectorXd y(data_.dim);
    for (int i = 0; i < N; ++i) {
      auto block = grad.subspan(lay.state_offset[i], lay.state_size[i]);
      for (int t = 0; t < s.length(); ++t) {
        if (s.missing[t])
          continue;
        y = s.observations.row(t).transpose();
        gau[i].accumulate_log_gradient({ y.data(), static_cast<std::size_t>(y.size()) },
                                       post.state_probs(t, i), block);
      }
    }
  }
  return post.log_likelihood;
}

double LikelihoodEvaluator::value(const HmmModel& model) const
{
  std::vector<double> terms(data_.sequences.size());
  parallel_for(terms.size(), [&](std::size_t m) { terms[m] = sequence_term(model, m, {}, false); });
  double total = 0.0;
  for (double v : terms)
    total += v;
  return total;
}

double LikelihoodEvaluator::value_and_gradient(const HmmModel& model, std::span<double> grad) const
{
  const std::size_t P = parameter_layout(model).total;
  if (grad.size() != P)
    fail(ErrorCode::dimension_mismatch, "gradient buffer has the wrong length");
  const std::size_t M = data_.sequences.size();
  std::vector<double> terms(M);
  std::vector<std::vector<double>> grads(M, std::vector<double>(P, 0.0));
  parallel_for(M, [&](std::size_t m) { terms[m] = sequence_term(model, m, grads[m], true); });
  std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    total += terms[m];
    for (std::size_t k = 0; k < P; ++k)
      grad[k] += grads[m][k];
  }
  return total;
}

// ---------------------------------------------------------------------------
// k-means

namespace {

double sq_dist(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j)
{
  return (a.row(i) - b.row(j)).squaredNorm();
}

std::optional<KMeansResult> lloyd(const Eigen::MatrixXd& x, int k, int max_iter, std::mt19937_64& rng)
{
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());
  // k-means++ seeding
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = x.row(pick(rng));
  std::vector<double> d2(n);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < c; ++j)
        best = std::min(best, sq_dist(x, i, centers, j));
      d2[i] = best;
      total += best;
    }
    Eigen::Index chosen = pick(rng);
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0.0) {
          chosen = i;
          break;
        }
      }
    }
    centers.row(c) = x.row(chosen);
  }

  std::vector<int> assign(n, -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best_c = 0;
      double best = sq_dist(x, i, centers, 0);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(x, i, centers, c);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      if (assign[i] != best_c) {
        assign[i] = best_c;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += x.row(i);
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0)
        return std::nullopt;
      centers.row(c) = sums.row(c) / counts[c];
    }
    if (!changed)
      break;
  }

  KMeansResult r;
  r.centers = centers;
  r.assignment = assign;
  for (Eigen::Index i = 0; i < n; ++i)
    r.within_ss += sq_dist(x, i, centers, assign[i]);
  return r;
}

} // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, int seedings, int max_iter, int retries,
                    std::mt19937_64& rng)
{
  require(k >= 1, "k-means needs k >= 1");
  require(points.rows() >= k, "k-means needs at least k observations");
  require(seedings >= 1 && max_iter >= 1, "k-means needs positive seedings and iterations");
  std::optional<KMeansResult> best;
  for (int s = 0; s < seedings; ++s) {
    std::optional<KMeansResult> r;
    for (int attempt = 0; attempt <= retries && !r; ++attempt)
      r = lloyd(points, k, max_iter, rng);
    if (!r)
      fail(ErrorCode::init_failure, "k-means produced an empty cluster after repeated re-seeding");
    if (!best || r->within_ss < best->within_ss)
      best = std::move(r);
  }

  // Canonical order: sort clusters lexicographically by center.
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (Eigen::Index d = 0; d < points.cols(); ++d)
      if (best->centers(a, d) != best->centers(b, d))
        return best->centers(a, d) < best->centers(b, d);
    return a < b;
  });
  std::vector<int> rank(k);
  KMeansResult out;
  out.centers.resize(k, points.cols());
  for (int c = 0; c < k; ++c) {
    rank[order[c]] = c;
    out.centers.row(c) = best->centers.row(order[c]);
  }
  out.assignment.resize(best->assignment.size());
  for (std::size_t i = 0; i < out.assignment.size(); ++i)
    out.assignment[i] = rank[best->assignment[i]];
  out.within_ss = best->within_ss;
  return out;
}

// ---------------------------------------------------------------------------
// Initialization

std::vector<SplineBasis> make_bases(const SequenceSet& data, const ModelConfig& config)
{
  const std::vector<int> counts = config.counts_for(data.dim);
  std::vector<SplineBasis> bases;
  Eigen::MatrixXd pooled;
  if (config.support.empty())
    pooled = data.pooled_observations();
  else if (static_cast<int>(config.support.size()) != data.dim)
    fail(ErrorCode::dimension_mismatch, "explicit support needs one interval per dimension");
  for (int d = 0; d < data.dim; ++d) {
    std::pair<double, double> sup;
    if (config.support.empty()) {
      std::vector<double> col(pooled.col(d).data(), pooled.col(d).data() + pooled.rows());
      sup = support_from_data(col, config.support_margin);
    } else {
      sup = config.support[d];
    }
    bases.emplace_back(d + 1, counts[d], sup.first, sup.second);
  }
  return bases;
}

TensorEmission fit_iid_spline(const Eigen::MatrixXd& points, std::vector<SplineBasis> bases,
                              const LbfgsSettings& settings, double* log_likelihood,
                              const TensorEmission* start, std::span<const double> weights)
{
  require(points.rows() >= 1, "i.i.d. spline fit needs at least one point");
  if (!weights.empty() && weights.size() != static_cast<std::size_t>(points.rows()))
    fail(ErrorCode::dimension_mismatch, "one weight per point is required");
  TensorEmission em = start ? *start : TensorEmission(bases);
  const BasisTable table(em.bases(), points);
  const std::size_t n = static_cast<std::size_t>(points.rows());
  std::vector<double> acc(em.num_coefficients());

  auto objective = [&](std::span<const double> x, std::span<double> grad) {
    em.set_free_beta(x);
    acc.assign(acc.size(), 0.0);
    double ll = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weights.empty() ? 1.0 : weights[i];
      if (w == 0.0)
        continue;
      const double f = em.density(table, i);
      if (!(f > 0.0)) {
        ll += w * std::log(TensorEmission::kLogFloor);
        continue;
      }
      ll += w * std::log(f);
      total += w;
      em.accumulate_basis(table, i, w / f, acc);
    }
    em.free_gradient(acc, total, grad);
    for (double& g : grad)
      g = -g;
    return -ll;
  };

  std::vector<double> x0(em.num_free());
  em.free_beta(x0);
  LbfgsResult r = minimize_lbfgs(objective, x0, settings);
  em.set_free_beta(r.x);
  if (log_likelihood)
    *log_likelihood = -r.value;
  return em;
}

HmmModel kmeans_init(const SequenceSet& data, const ModelConfig& config, const OptimizerConfig& optimizer)
{
  data.validate();
  const int N = config.n_states;
  require(N >= 1, "n_states must be >= 1");
  Eigen::MatrixXd pooled = data.pooled_observations();
  if (pooled.rows() < N)
    fail(ErrorCode::init_failure, "fewer observed points than states");

  std::mt19937_64 rng(derive_seed(optimizer.seed, 0x6b6d65616e73ULL));
  KMeansResult km = kmeans(pooled, N, optimizer.kmeans_seedings, optimizer.kmeans_max_iter,
                           optimizer.kmeans_retries, rng);

  std::vector<Eigen::MatrixXd> clusters(N);
  {
    std::vector<int> counts(N, 0);
    for (int a : km.assignment)
      ++counts[a];
    for (int c = 0; c < N; ++c)
      clusters[c].resize(counts[c], data.dim);
    std::fill(counts.begin(), counts.end(), 0);
    for (Eigen::Index i = 0; i < pooled.rows(); ++i) {
      const int c = km.assignment[i];
      clusters[c].row(counts[c]++) = pooled.row(i);
    }
  }

  EmissionSet emissions;
  if (config.family == EmissionFamily::spline) {
    std::vector<SplineBasis> bases = make_bases(data, config);
    LbfgsSettings s = optimizer.lbfgs();
    s.max_iter = optimizer.init_max_iter;
    std::vector<std::optional<TensorEmission>> fitted(N);
    parallel_for(static_cast<std::size_t>(N),
                 [&](std::size_t c) { fitted[c] = fit_iid_spline(clusters[c], bases, s); });
    std::vector<TensorEmission> em;
    for (auto& f : fitted)
      em.push_back(std::move(*f));
    emissions = std::move(em);
  } else {
    std::vector<GaussianEmission> em;
    for (int c = 0; c < N; ++c) {
      const Eigen::MatrixXd& x = clusters[c];
      Eigen::VectorXd mean = x.colwise().mean().transpose();
      Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
      Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows());
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success || cov.diagonal().minCoeff() <= 0.0) {
        const double ridge = std::max(1e-6, 1e-6 * cov.trace() / data.dim);
        cov += ridge * Eigen::MatrixXd::Identity(data.dim, data.dim);
      }
      em.emplace_back(mean, cov);
    }
    emissions = std::move(em);
  }

  TransitionModel transition = TransitionMatrix::persistent(N, optimizer.init_persistence);
  if (config.use_covariates) {
    require(data.n_covariates >= 1, "covariate model requested but the data have no covariates");
    CovariateTransition cov(N, data.n_covariates);
    if (N > 1) {
      const double off = std::log((1.0 - optimizer.init_persistence) / (N - 1) / optimizer.init_persistence);
      cov.intercept().setConstant(off);
      cov.intercept().diagonal().setZero();
    }
    // Standardize covariates with the training-set mean and sd.
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(data.n_covariates);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(data.n_covariates);
    double count = 0.0;
    for (const auto& s : data.sequences)
      for (int t = 0; t < s.length(); ++t) {
        mean += s.covariates.row(t).transpose();
        count += 1.0;
      }
    mean /= count;
    for (const auto& s : data.sequences)
      for (int t = 0; t < s.length(); ++t)
        sq += (s.covariates.row(t).transpose() - mean).cwiseAbs2();
    Eigen::VectorXd sd = (sq / std::max(1.0, count - 1.0)).cwiseSqrt();
    for (Eigen::Index l = 0; l < sd.size(); ++l)
      if (!(sd(l) > 0.0))
        sd(l) = 1.0;
    cov.set_standardization(mean, sd);
    transition = std::move(cov);
  }
  return HmmModel(std::move(transition), std::move(emissions));
}

// ---------------------------------------------------------------------------
// Fitting

FitResult fit_from(const SequenceSet& data, const HmmModel& init, const OptimizerConfig& optimizer)
{
  const auto start = std::chrono::steady_clock::now();
  LikelihoodEvaluator eval(data, init);
  HmmModel work = init;

  auto objective = [&](std::span<const double> x, std::span<double> grad) {
    try {
      unpack_parameters(work, x);
      const double ll = eval.value_and_gradient(work, grad);
      if (!std::isfinite(ll))
        return std::numeric_limits<double>::infinity();
      for (double& g : grad)
        g = -g;
      return -ll;
    } catch (const Error& e) {
      // Parameters that overflow or produce a degenerate chain are infeasible.
      if (e.code() == ErrorCode::invalid_argument || e.code() == ErrorCode::degenerate_chain)
        return std::numeric_limits<double>::infinity();
      throw;
    }
  };

  std::vector<double> x0 = pack_parameters(init);
  LbfgsResult r;
  try {
    r = minimize_lbfgs(objective, x0, optimizer.lbfgs());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::init_failure)
      fail(ErrorCode::init_failure, "log-likelihood is not finite at the initial parameters");
    throw;
  }

  HmmModel fitted = init;
  unpack_parameters(fitted, r.x);
  DensityDiagnostics diag;
  FitReport rep;
  rep.log_likelihood = joint_log_likelihood(fitted, data, &diag);
  rep.iterations = r.iterations;
  rep.evaluations = r.evaluations;
  rep.grad_norm = r.grad_norm;
  rep.converged = r.converged && std::isfinite(rep.log_likelihood);
  rep.status = r.status;
  rep.support_escapes = diag.support_escapes;
  rep.restart_log_likelihoods = { rep.log_likelihood };
  if (const auto* spl = std::get_if<std::vector<TensorEmission>>(&fitted.emissions()))
    for (const auto& b : spl->front().bases())
      rep.basis_counts.push_back(b.size());
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return { std::move(fitted), std::move(rep) };
}

FitResult fit(const SequenceSet& data, const HmmModel& init, const OptimizerConfig& optimizer)
{
  return fit(data, std::span<const HmmModel>(&init, 1), optimizer);
}

FitResult fit(const SequenceSet& data, std::span<const HmmModel> inits, const OptimizerConfig& optimizer)
{
  require(optimizer.restarts >= 0, "restart count must be nonnegative");
  require(!inits.empty(), "at least one starting model is required");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n_starts = inits.size();
  const std::size_t runs = n_starts + static_cast<std::size_t>(optimizer.restarts);

  std::vector<std::optional<FitResult>> results(runs);
  parallel_for(runs, [&](std::size_t r) {
    const HmmModel& origin = inits[r < n_starts ? r : (r - n_starts) % n_starts];
    HmmModel start_model = origin;
    if (r >= n_starts) {
      std::mt19937_64 rng(derive_seed(optimizer.seed, 0x72657374ULL, r - n_starts + 1));
      std::normal_distribution<double> noise(0.0, optimizer.jitter);
      std::vector<double> x = pack_parameters(origin);
      for (double& v : x)
        v += noise(rng);
      try {
        unpack_parameters(start_model, x);
      } catch (const Error&) {
        return;
      }
    }
    try {
      results[r] = fit_from(data, start_model, optimizer);
    } catch (const Error& e) {
      if (r == 0 || e.code() != ErrorCode::init_failure)
        throw;
    }
  });

  std::size_t best = 0;
  std::vector<double> lls(runs, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < runs; ++r) {
    if (!results[r])
      continue;
    lls[r] = results[r]->report.log_likelihood;
    if (!results[best] || lls[r] > lls[best])
      best = r;
  }
  FitResult out = std::move(*results[best]);
  out.report.best_restart = static_cast<int>(best);
  out.report.restart_log_likelihoods = lls;
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

HmmModel parametric_start(const SequenceSet& data, const ModelConfig& config, const OptimizerConfig& optimizer)
{
  require(config.family == EmissionFamily::spline, "the parametric start applies to spline models");
  ModelConfig gauss = config;
  gauss.family = EmissionFamily::gaussian;
  OptimizerConfig opt = optimizer;
  opt.restarts = 0;
  const HmmModel pilot = fit(data, kmeans_init(data, gauss, opt), opt).model;

  const int N = config.n_states;
  Eigen::MatrixXd pooled = data.pooled_observations();
  Eigen::MatrixXd weights(pooled.rows(), N);
  Eigen::Index row = 0;
  for (const auto& seq : data.sequences) {
    const auto gammas = pilot.transitions(seq);
    const Posterior post = forward_backward(pilot.initial_distribution(seq), gammas, pilot.density_matrix(seq));
    for (int t = 0; t < seq.length(); ++t)
      if (!seq.missing[t])
        weights.row(row++) = post.state_probs.row(t);
  }

  std::vector<SplineBasis> bases = make_bases(data, config);
  LbfgsSettings s = optimizer.lbfgs();
  s.max_iter = optimizer.init_max_iter;
  std::vector<std::optional<TensorEmission>> fitted(N);
  parallel_for(static_cast<std::size_t>(N), [&](std::size_t c) {
    const Eigen::VectorXd w = weights.col(static_cast<Eigen::Index>(c));
    fitted[c] = fit_iid_spline(pooled, bases, s, nullptr, nullptr, std::span<const double>(w.data(), w.size()));
  });
  std::vector<TensorEmission> em;
  for (auto& f : fitted)
    em.push_back(std::move(*f));
  HmmModel model(pilot.transition(), std::move(em));
  model.set_initial(pilot.fixed_initial());
  return model;
}

std::vector<HmmModel> initial_models(const SequenceSet& data, const ModelConfig& config,
                                     const OptimizerConfig& optimizer)
{
  std::vector<HmmModel> out{ kmeans_init(data, config, optimizer) };
  if (optimizer.parametric_start && config.family == EmissionFamily::spline && config.n_states > 1) {
    try {
      out.push_back(parametric_start(data, config, optimizer));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::init_failure && e.code() != ErrorCode::invalid_argument &&
          e.code() != ErrorCode::degenerate_chain)
        throw;
    }
  }
  return out;
}

FitResult fit_model(const SequenceSet& data, const ModelConfig& config, const OptimizerConfig& optimizer)
{
  const std::vector<HmmModel> inits = initial_models(data, config, optimizer);
  return fit(data, inits, optimizer);
}

} // namespace nphmm
