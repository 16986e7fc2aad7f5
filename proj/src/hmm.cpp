#include "nphmm/hmm.hpp"

#include "nphmm/error.hpp"
#include "nphmm/parallel.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace nphmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const Eigen::MatrixXd& gamma_at(std::span<const Eigen::MatrixXd> gammas, int t)
{
  return gammas.size() == 1 ? gammas[0] : gammas[t];
}

void check_shapes(const Eigen::VectorXd& delta, std::span<const Eigen::MatrixXd> gammas,
                  const Eigen::MatrixXd& dens)
{
  const auto n = delta.size();
  if (dens.cols() != n)
    fail(ErrorCode::dimension_mismatch, "density matrix columns must equal the state count");
  if (dens.rows() < 1)
    fail(ErrorCode::invalid_argument, "sequence must contain at least one time point");
  if (gammas.size() != 1 && static_cast<Eigen::Index>(gammas.size()) != dens.rows())
    fail(ErrorCode::dimension_mismatch, "need one t.p.m. or one per time point");
  for (const auto& g : gammas)
    if (g.rows() != n || g.cols() != n)
      fail(ErrorCode::dimension_mismatch, "t.p.m. shape does not match the state count");
}

} // namespace

std::span<const double> Sequence::covariates_at(int t) const
{
  if (covariates.cols() == 0)
    return {};
  return { covariates.data() + static_cast<Eigen::Index>(t) * covariates.cols(),
           static_cast<std::size_t>(covariates.cols()) };
}

Sequence make_sequence(Eigen::MatrixXd observations, std::string id)
{
  Sequence s;
  s.id = std::move(id);
  s.missing.assign(static_cast<std::size_t>(observations.rows()), 0);
  s.covariates.resize(observations.rows(), 0);
  s.observations = std::move(observations);
  return s;
}

void SequenceSet::validate() const
{
  require(dim >= 1, "sequence set dimension must be >= 1");
  require(!sequences.empty(), "sequence set is empty");
  for (const auto& s : sequences) {
    if (s.observations.cols() != dim)
      fail(ErrorCode::dimension_mismatch, "sequence '" + s.id + "' has the wrong dimension");
    require(s.length() >= 1, "sequence '" + s.id + "' is empty");
    if (static_cast<int>(s.missing.size()) != s.length())
      fail(ErrorCode::dimension_mismatch, "sequence '" + s.id + "' missing mask length mismatch");
    if (s.covariates.cols() != n_covariates ||
        (n_covariates > 0 && s.covariates.rows() != s.length()))
      fail(ErrorCode::dimension_mismatch, "sequence '" + s.id + "' covariate shape mismatch");
  }
}

std::size_t SequenceSet::total_length() const
{
  std::size_t n = 0;
  for (const auto& s : sequences)
    n += static_cast<std::size_t>(s.length());
  return n;
}

Eigen::MatrixXd SequenceSet::pooled_observations() const
{
  std::size_t n = 0;
  for (const auto& s : sequences)
    for (auto m : s.missing)
      n += m ? 0 : 1;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), dim);
  Eigen::Index r = 0;
  for (const auto& s : sequences)
    for (int t = 0; t < s.length(); ++t)
      if (!s.missing[t])
        out.row(r++) = s.observations.row(t);
  return out;
}

HmmModel::HmmModel(TransitionModel transition, EmissionSet emissions)
  : transition_(std::move(transition))
  , emissions_(std::move(emissions))
{
  const int n_tr = std::visit([](const auto& t) { return t.n_states(); }, transition_);
  const int n_em = std::visit([](const auto& e) { return static_cast<int>(e.size()); }, emissions_);
  if (n_tr != n_em)
    fail(ErrorCode::dimension_mismatch, "transition and emission state counts differ");
  require(n_em >= 1, "model needs at least one state");
  const int d = dim();
  std::visit(
    [d](const auto& e) {
      for (const auto& s : e)
        if (s.dim() != d)
          fail(ErrorCode::dimension_mismatch, "emission dimensions differ across states");
    },
    emissions_);
}

int HmmModel::n_states() const
{
  return std::visit([](const auto& e) { return static_cast<int>(e.size()); }, emissions_);
}

int HmmModel::dim() const
{
  return std::visit([](const auto& e) { return e.front().dim(); }, emissions_);
}

void HmmModel::set_initial(std::optional<Eigen::VectorXd> delta)
{
  if (delta) {
    if (delta->size() != n_states())
      fail(ErrorCode::dimension_mismatch, "initial law length must equal the state count");
    require(delta->allFinite() && delta->minCoeff() >= 0.0 &&
              std::abs(delta->sum() - 1.0) <= 1e-12,
            "initial law must be a probability vector");
  }
  fixed_initial_ = std::move(delta);
}

double HmmModel::density(int state, std::span<const double> y) const
{
  return std::visit([&](const auto& e) { return e.at(state).density(y); }, emissions_);
}

Eigen::MatrixXd HmmModel::density_matrix(const Sequence& seq, DensityDiagnostics* diag,
                                         double floor) const
{
  if (seq.observations.cols() != dim())
    fail(ErrorCode::dimension_mismatch, "sequence dimension does not match the model");
  const int T = seq.length();
  const int N = n_states();
  Eigen::MatrixXd dens(T, N);
  if (const auto* spl = std::get_if<std::vector<TensorEmission>>(&emissions_)) {
    for (int i = 0; i < N; ++i) {
      BasisTable table((*spl)[i].bases(), seq.observations, &seq.missing);
      for (int t = 0; t < T; ++t)
        dens(t, i) = seq.missing[t] ? 1.0 : (*spl)[i].density(table, t);
    }
  } else {
    const auto& gau = std::get<std::vector<GaussianEmission>>(emissions_);
    Eigen::VectorXd y(dim());
    for (int t = 0; t < T; ++t) {
      if (seq.missing[t]) {
        dens.row(t).setOnes();
        continue;
      }
      y = seq.observations.row(t).transpose();
      for (int i = 0; i < N; ++i)
        dens(t, i) = gau[i].density({ y.data(), static_cast<std::size_t>(y.size()) });
    }
  }
  for (int t = 0; t < T; ++t) {
    if (seq.missing[t])
      continue;
    bool all_zero = true;
    bool any_zero = false;
    for (int i = 0; i < N; ++i) {
      if (dens(t, i) > 0.0)
        all_zero = false;
      else
        any_zero = true;
      if (floor > 0.0 && dens(t, i) < floor) {
        dens(t, i) = floor;
        if (diag)
          ++diag->floored;
      }
    }
    if (diag) {
      if (any_zero)
        ++diag->support_escapes;
      if (all_zero && floor <= 0.0)
        diag->zero_times.push_back(t);
    }
  }
  return dens;
}

std::vector<Eigen::MatrixXd> HmmModel::transitions(const Sequence& seq) const
{
  if (const auto* tm = std::get_if<TransitionMatrix>(&transition_))
    return { tm->matrix() };
  const auto& cov = std::get<CovariateTransition>(transition_);
  if (seq.covariates.cols() != cov.n_covariates() || seq.covariates.rows() != seq.length())
    fail(ErrorCode::dimension_mismatch, "sequence covariates do not match the transition model");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(seq.length()));
  for (int t = 0; t < seq.length(); ++t)
    out.push_back(cov.tpm_at(seq.covariates_at(t)).matrix());
  return out;
}

Eigen::VectorXd HmmModel::initial_distribution(const Sequence& seq) const
{
  if (fixed_initial_)
    return *fixed_initial_;
  if (const auto* tm = std::get_if<TransitionMatrix>(&transition_))
    return stationary_distribution(*tm);
  const auto& cov = std::get<CovariateTransition>(transition_);
  return stationary_distribution(cov.tpm_at(seq.covariates_at(0)));
}

HmmModel HmmModel::permuted(std::span<const int> perm) const
{
  const int N = n_states();
  require(static_cast<int>(perm.size()) == N, "permutation length must equal the state count");
  std::vector<bool> seen(N, false);
  for (int p : perm) {
    require(p >= 0 && p < N && !seen[p], "not a permutation");
    seen[p] = true;
  }
  auto permute_matrix = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(N, N);
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b)
        out(a, b) = m(perm[a], perm[b]);
    return out;
  };
  TransitionModel tr = std::visit(
    [&](const auto& t) -> TransitionModel {
      using T = std::decay_t<decltype(t)>;
      if constexpr (std::is_same_v<T, TransitionMatrix>) {
        return TransitionMatrix(permute_matrix(t.matrix()));
      } else {
        CovariateTransition c(t.n_states(), t.n_covariates());
        c.intercept() = permute_matrix(t.intercept());
        for (int l = 0; l < t.n_covariates(); ++l)
          c.slope(l) = permute_matrix(t.slope(l));
        c.set_standardization(t.center(), t.scale());
        return c;
      }
    },
    transition_);
  EmissionSet em = std::visit(
    [&](const auto& e) -> EmissionSet {
      std::decay_t<decltype(e)> out;
      for (int k = 0; k < N; ++k)
        out.push_back(e[perm[k]]);
      return out;
    },
    emissions_);
  HmmModel m(std::move(tr), std::move(em));
  if (fixed_initial_) {
    Eigen::VectorXd d(N);
    for (int k = 0; k < N; ++k)
      d(k) = (*fixed_initial_)(perm[k]);
    m.set_initial(d);
  }
  return m;
}

double forward_log_likelihood(const Eigen::VectorXd& delta,
                              std::span<const Eigen::MatrixXd> gammas,
                              const Eigen::MatrixXd& dens,
                              std::vector<int>* zero_times)
{
  check_shapes(delta, gammas, dens);
  const Eigen::Index T = dens.rows();
  Eigen::RowVectorXd phi = delta.transpose().cwiseProduct(dens.row(0));
  double ll = 0.0;
  bool dead = false;
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0)
      phi = (phi * gamma_at(gammas, static_cast<int>(t))).cwiseProduct(dens.row(t));
    const double c = phi.sum();
    if (!(c > 0.0)) {
      if (zero_times)
        zero_times->push_back(static_cast<int>(t));
      dead = true;
      break;
    }
    ll += std::log(c);
    phi /= c;
  }
  return dead ? kNegInf : ll;
}

std::vector<int> viterbi_path(const Eigen::VectorXd& delta,
                              std::span<const Eigen::MatrixXd> gammas,
                              const Eigen::MatrixXd& dens)
{
  check_shapes(delta, gammas, dens);
  const int T = static_cast<int>(dens.rows());
  const int N = static_cast<int>(delta.size());
  auto safe_log = [](double v) { return v > 0.0 ? std::log(v) : kNegInf; };

  Eigen::MatrixXd score(T, N);
  Eigen::MatrixXi back(T, N);
  for (int i = 0; i < N; ++i)
    score(0, i) = safe_log(delta(i)) + safe_log(dens(0, i));

  Eigen::MatrixXd log_gamma(N, N);
  const Eigen::MatrixXd* cached = nullptr;
  for (int t = 1; t < T; ++t) {
    const Eigen::MatrixXd& g = gamma_at(gammas, t);
    if (&g != cached) {
      log_gamma = g.unaryExpr(safe_log);
      cached = &g;
    }
    for (int j = 0; j < N; ++j) {
      double best = kNegInf;
      int arg = 0;
      for (int i = 0; i < N; ++i) {
        const double v = score(t - 1, i) + log_gamma(i, j);
        if (v > best) {
          best = v;
          arg = i;
        }
      }
      score(t, j) = best + safe_log(dens(t, j));
      back(t, j) = arg;
    }
  }

  std::vector<int> path(T);
  double best = kNegInf;
  int arg = -1;
  for (int i = 0; i < N; ++i)
    if (score(T - 1, i) > best) {
      best = score(T - 1, i);
      arg = i;
    }
  if (arg < 0)
    fail(ErrorCode::invalid_argument, "viterbi: every state path has zero probability");
  path[T - 1] = arg;
  for (int t = T - 1; t > 0; --t)
    path[t - 1] = back(t, path[t]);
  return path;
}

Posterior forward_backward(const Eigen::VectorXd& delta,
                           std::span<const Eigen::MatrixXd> gammas,
                           const Eigen::MatrixXd& dens)
{
  check_shapes(delta, gammas, dens);
  const int T = static_cast<int>(dens.rows());
  const int N = static_cast<int>(delta.size());
  const bool homogeneous = gammas.size() == 1;

  // Row-major scratch so each time step is a contiguous row.
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor phi(T, N);     // scaled forward variables
  RowMajor beta(T, N);    // scaled backward variables
  Eigen::VectorXd scale(T);
  Posterior post;
  for (int t = 0; t < T; ++t) {
    double* a = phi.row(t).data();
    if (t == 0) {
      for (int j = 0; j < N; ++j)
        a[j] = delta(j) * dens(0, j);
    } else {
      const Eigen::MatrixXd& g = gamma_at(gammas, t);
      const double* prev = phi.row(t - 1).data();
      for (int j = 0; j < N; ++j) {
        double v = 0.0;
        for (int i = 0; i < N; ++i)
          v += prev[i] * g(i, j);
        a[j] = v * dens(t, j);
      }
    }
    double c = 0.0;
    for (int j = 0; j < N; ++j)
      c += a[j];
    if (!(c > 0.0)) {
      post.log_likelihood = kNegInf;
      return post;
    }
    scale(t) = c;
    for (int j = 0; j < N; ++j)
      a[j] /= c;
    post.log_likelihood += std::log(c);
  }

  std::vector<double> w(static_cast<std::size_t>(N));
  beta.row(T - 1).setOnes();
  for (int t = T - 1; t > 0; --t) {
    const Eigen::MatrixXd& g = gamma_at(gammas, t);
    for (int j = 0; j < N; ++j)
      w[j] = dens(t, j) * beta(t, j) / scale(t);
    for (int i = 0; i < N; ++i) {
      double v = 0.0;
      for (int j = 0; j < N; ++j)
        v += g(i, j) * w[j];
      beta(t - 1, i) = v;
    }
  }

  post.state_probs = phi.cwiseProduct(beta);
  post.initial_sensitivity = dens.row(0).transpose().cwiseProduct(beta.row(0).transpose()) / scale(0);

  if (homogeneous)
    post.gamma_sensitivity.assign(1, Eigen::MatrixXd::Zero(N, N));
  else
    post.gamma_sensitivity.assign(static_cast<std::size_t>(T), Eigen::MatrixXd());
  for (int t = 1; t < T; ++t) {
    // xi_t(i, j) / gamma_ij = phi_{t-1}(i) f_j(y_t) beta_t(j) / c_t
    for (int j = 0; j < N; ++j)
      w[j] = dens(t, j) * beta(t, j) / scale(t);
    Eigen::MatrixXd* target = &post.gamma_sensitivity[0];
    if (!homogeneous) {
      post.gamma_sensitivity[t] = Eigen::MatrixXd::Zero(N, N);
      target = &post.gamma_sensitivity[t];
    }
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i)
        (*target)(i, j) += phi(t - 1, i) * w[j];
  }
  return post;
}

double log_likelihood(const HmmModel& model, const Sequence& seq, DensityDiagnostics* diag)
{
  DensityDiagnostics local;
  Eigen::MatrixXd dens = model.density_matrix(seq, &local);
  auto gammas = model.transitions(seq);
  double ll = forward_log_likelihood(model.initial_distribution(seq), gammas, dens);
  if (diag) {
    diag->support_escapes += local.support_escapes;
    diag->floored += local.floored;
    diag->zero_times.insert(diag->zero_times.end(), local.zero_times.begin(), local.zero_times.end());
  }
  return ll;
}

double joint_log_likelihood(const HmmModel& model, const SequenceSet& data, DensityDiagnostics* diag)
{
  if (data.dim != model.dim())
    fail(ErrorCode::dimension_mismatch, "data dimension does not match the model");
  std::vector<double> terms(data.sequences.size());
  std::vector<DensityDiagnostics> diags(data.sequences.size());
  parallel_for(data.sequences.size(), [&](std::size_t m) {
    terms[m] = log_likelihood(model, data.sequences[m], &diags[m]);
  });
  double total = 0.0;
  for (std::size_t m = 0; m < terms.size(); ++m) {
    total += terms[m];
    if (diag) {
      diag->support_escapes += diags[m].support_escapes;
      diag->floored += diags[m].floored;
      diag->zero_times.insert(diag->zero_times.end(), diags[m].zero_times.begin(),
                              diags[m].zero_times.end());
    }
  }
  return total;
}

std::vector<int> viterbi(const HmmModel& model, const Sequence& seq)
{
  Eigen::MatrixXd dens = model.density_matrix(seq);
  auto gammas = model.transitions(seq);
  return viterbi_path(model.initial_distribution(seq), gammas, dens);
}

} // namespace nphmm
