#include "fixtures.hpp"
#include "oracles.hpp"

#include "nphmm/error.hpp"
#include "nphmm/estimation.hpp"
#include "nphmm/optimizer.hpp"
#include "nphmm/simulation.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace nphmm;

namespace {

double fd_check(const SequenceSet& data, const HmmModel& model)
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

HmmModel random_gaussian_model(int N, int D, std::mt19937_64& rng)
{
  std::normal_distribution<double> z;
  std::vector<GaussianEmission> em;
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd m(D);
    for (int d = 0; d < D; ++d)
      m(d) = 0.5 + 0.3 * z(rng);
    Eigen::MatrixXd a(D, D);
    for (int r = 0; r < D; ++r)
      for (int c = 0; c < D; ++c)
        a(r, c) = 0.2 * z(rng);
    em.emplace_back(m, a * a.transpose() + 0.05 * Eigen::MatrixXd::Identity(D, D));
  }
  return HmmModel(TransitionMatrix(oracle::random_tpm(N, rng)), std::move(em));
}

SequenceSet two_clouds(int per_cloud, std::mt19937_64& rng, std::vector<int>* truth = nullptr)
{
  std::normal_distribution<double> z(0.0, 0.3);
  Eigen::MatrixXd y(2 * per_cloud, 2);
  for (int i = 0; i < 2 * per_cloud; ++i) {
    const double c = i % 2 ? 5.0 : -5.0;
    y.row(i) << c + z(rng), c + z(rng);
    if (truth)
      truth->push_back(i % 2);
  }
  return fixture::single(make_sequence(y));
}

} // namespace

TEST_CASE("t.p.m. logits")
{
  auto g = unpack_tpm(2, std::vector<double>{ 0.0, 0.0 });
  CHECK((g.matrix().array() - 0.5).abs().maxCoeff() == 0.0);

  Eigen::MatrixXd p(2, 2);
  p << 0.97, 0.03, 0.03, 0.97;
  auto l = pack_tpm(TransitionMatrix(p));
  REQUIRE(l.size() == 2);
  CHECK(l[0] == doctest::Approx(std::log(0.03 / 0.97)).epsilon(1e-15));
  CHECK(l[1] == doctest::Approx(std::log(0.03 / 0.97)).epsilon(1e-15));
  CHECK((unpack_tpm(2, l).matrix() - p).cwiseAbs().maxCoeff() <= 1e-15);

  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::MatrixXd r = oracle::random_tpm(2 + rep % 4, rng, 0.01);
    auto back = unpack_tpm(static_cast<int>(r.rows()), pack_tpm(TransitionMatrix(r))).matrix();
    CHECK((back - r).cwiseAbs().maxCoeff() <= 1e-14);
  }

  Eigen::MatrixXd z(2, 2);
  z << 1.0, 0.0, 0.5, 0.5;
  CHECK_THROWS_AS(pack_tpm(TransitionMatrix(z)), Error);
}

TEST_CASE("parameter vector round trip")
{
  std::mt19937_64 rng(2);
  HmmModel a = fixture::random_spline_model(3, 2, 5, rng);
  HmmModel b = fixture::random_spline_model(3, 2, 5, rng);
  auto pa = pack_parameters(a);
  CHECK(pa.size() == parameter_layout(a).total);
  CHECK(pa.size() == 6 + 3 * 24);
  unpack_parameters(b, pa);
  CHECK(pack_parameters(b) == pa);

  HmmModel g = random_gaussian_model(2, 2, rng);
  HmmModel h = random_gaussian_model(2, 2, rng);
  auto pg = pack_parameters(g);
  unpack_parameters(h, pg);
  CHECK(pack_parameters(h) == pg);

  CovariateTransition ct(3, 2);
  std::vector<double> w(ct.num_parameters());
  for (auto& v : w)
    v = 0.1 * (&v - w.data());
  ct.set_parameters(w);
  HmmModel c(ct, std::get<std::vector<TensorEmission>>(a.emissions()));
  auto pc = pack_parameters(c);
  CHECK(parameter_layout(c).transition_size == 3 * 6);
  HmmModel d(CovariateTransition(3, 2), std::get<std::vector<TensorEmission>>(b.emissions()));
  unpack_parameters(d, pc);
  CHECK(pack_parameters(d) == pc);

  std::vector<double> short_vec(pc.size() - 1);
  CHECK_THROWS_AS(unpack_parameters(d, short_vec), Error);
}

TEST_CASE("analytic gradients match finite differences")
{
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    HmmModel m = fixture::random_spline_model(2, 2, 5, rng);
    SequenceSet data = fixture::single(fixture::random_sequence(50, 2, rng));
    data.sequences[0].missing[7] = 1;
    CHECK(fd_check(data, m) <= 1e-4);
  }
  for (int rep = 0; rep < 5; ++rep) {
    HmmModel m = random_gaussian_model(3, 2, rng);
    SequenceSet data;
    data.dim = 2;
    for (int k = 0; k < 2; ++k)
      data.sequences.push_back(fixture::random_sequence(30, 2, rng));
    CHECK(fd_check(data, m) <= 1e-4);
  }
  for (int rep = 0; rep < 5; ++rep) {
    HmmModel base = fixture::random_spline_model(2, 2, 5, rng);
    CovariateTransition ct(2, 2);
    std::normal_distribution<double> z(0.0, 0.7);
    std::vector<double> w(ct.num_parameters());
    for (auto& v : w)
      v = z(rng);
    ct.set_parameters(w);
    Eigen::VectorXd center(2), scale(2);
    center << 0.3, -1.0;
    scale << 1.5, 0.5;
    ct.set_standardization(center, scale);
    HmmModel m(ct, std::get<std::vector<TensorEmission>>(base.emissions()));
    SequenceSet data = fixture::single(fixture::random_sequence(40, 2, rng));
    data.n_covariates = 2;
    data.sequences[0].covariates.resize(40, 2);
    for (int t = 0; t < 40; ++t)
      data.sequences[0].covariates.row(t) << z(rng), z(rng);
    CHECK(fd_check(data, m) <= 1e-4);
  }
}

TEST_CASE("k-means separates distant clouds")
{
  std::mt19937_64 rng(4);
  std::vector<int> truth;
  SequenceSet data = two_clouds(100, rng, &truth);
  std::mt19937_64 krng(1);
  KMeansResult km = kmeans(data.pooled_observations(), 2, 10, 300, 10, krng);
  CHECK(oracle::brute_accuracy(truth, km.assignment, 2) == 1.0);
  CHECK(km.centers(0, 0) < km.centers(1, 0));
}

TEST_CASE("Gaussian initial emissions are the cluster MLEs")
{
  std::mt19937_64 rng(5);
  std::vector<int> truth;
  SequenceSet data = two_clouds(150, rng, &truth);
  ModelConfig cfg;
  cfg.family = EmissionFamily::gaussian;
  HmmModel m = kmeans_init(data, cfg, OptimizerConfig{});
  const auto& em = std::get<std::vector<GaussianEmission>>(m.emissions());
  const Eigen::MatrixXd& y = data.sequences[0].observations;
  for (int c = 0; c < 2; ++c) {
    // cluster c is the cloud at -5 (c = 0) or +5 (c = 1)
    Eigen::MatrixXd pts(150, 2);
    int k = 0;
    for (int i = 0; i < 300; ++i)
      if (truth[i] == c)
        pts.row(k++) = y.row(i);
    Eigen::VectorXd mean = pts.colwise().mean();
    Eigen::MatrixXd cen = pts.rowwise() - mean.transpose();
    Eigen::MatrixXd cov = cen.transpose() * cen / 150.0;
    CHECK((em[c].mean() - mean).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((em[c].covariance() - cov).cwiseAbs().maxCoeff() <= 1e-10);
  }
  CHECK(fixture::gamma_of(m)(0, 0) == doctest::Approx(0.9));
}

TEST_CASE("single state: k-means start is the i.i.d. fit")
{
  std::mt19937_64 rng(6);
  SequenceSet data = fixture::single(fixture::random_sequence(300, 2, rng));
  ModelConfig cfg;
  cfg.n_states = 1;
  cfg.basis_counts = { 6 };
  OptimizerConfig opt;
  HmmModel init = kmeans_init(data, cfg, opt);
  LbfgsSettings s = opt.lbfgs();
  s.max_iter = opt.init_max_iter;
  TensorEmission iid = fit_iid_spline(data.pooled_observations(), make_bases(data, cfg), s);
  const auto& e = std::get<std::vector<TensorEmission>>(init.emissions())[0];
  for (std::size_t i = 0; i < iid.num_coefficients(); ++i)
    CHECK(e.coefficients()[i] == iid.coefficients()[i]);
}

TEST_CASE("single-state HMM fit equals the i.i.d. density fit")
{
  std::mt19937_64 rng(7);
  std::gamma_distribution<double> ga(3.0, 1.0);
  Eigen::MatrixXd y(800, 2);
  for (int i = 0; i < 800; ++i)
    y.row(i) << ga(rng), ga(rng);
  SequenceSet data = fixture::single(make_sequence(y));
  ModelConfig cfg;
  cfg.n_states = 1;
  cfg.basis_counts = { 7 };
  OptimizerConfig opt;
  opt.restarts = 0;
  FitResult fr = fit_model(data, cfg, opt);
  CHECK(fr.report.converged);
  double iid_ll = 0.0;
  fit_iid_spline(y, make_bases(data, cfg), opt.lbfgs(), &iid_ll);
  CHECK(std::abs(fr.report.log_likelihood - iid_ll) <= 1e-6);
}

TEST_CASE("Gaussian HMM: persistence recovered and the optimum is stationary")
{
  ScenarioConfig sc = ScenarioConfig::default_gaussian();
  sc.length = 2000;
  sc.seed = 21;
  SimulatedRun run = simulate_run(sc, 0);
  SequenceSet data = fixture::single(run.sequence);

  std::vector<GaussianEmission> truth;
  for (const auto& g : sc.gaussian)
    truth.emplace_back(g.mean, g.covariance);
  Eigen::MatrixXd g0(2, 2);
  g0 << 0.95, 0.05, 0.05, 0.95;
  HmmModel init(TransitionMatrix(g0), truth);
  OptimizerConfig opt;
  opt.restarts = 0;
  FitResult fr = fit_from(data, init, opt);
  REQUIRE(fr.report.converged);
  Eigen::MatrixXd g = fixture::gamma_of(fr.model);
  CHECK(std::abs(g(0, 0) - 0.97) <= 0.02);
  CHECK(std::abs(g(1, 1) - 0.97) <= 0.02);

  FitResult again = fit_from(data, fr.model, opt);
  CHECK(again.report.converged);
  CHECK(again.report.iterations <= 2);
  CHECK(std::abs(again.report.log_likelihood - fr.report.log_likelihood) <= 1e-6);
}

TEST_CASE("fit is reproducible and restarts never lose the start")
{
  ScenarioConfig sc = ScenarioConfig::default_copula_gamma();
  sc.length = 400;
  sc.seed = 5;
  SequenceSet data = fixture::single(simulate_run(sc, 0).sequence);
  ModelConfig cfg;
  cfg.basis_counts = { 6 };
  OptimizerConfig opt;
  opt.restarts = 2;
  opt.seed = 9;
  FitResult a = fit_model(data, cfg, opt);
  FitResult b = fit_model(data, cfg, opt);
  CHECK(a.report.log_likelihood == b.report.log_likelihood);
  CHECK(pack_parameters(a.model) == pack_parameters(b.model));
  REQUIRE(a.report.restart_log_likelihoods.size() >= 3);
  for (double v : a.report.restart_log_likelihoods)
    if (!std::isnan(v))
      CHECK(v <= a.report.log_likelihood);
}

TEST_CASE("line search never decreases the likelihood")
{
  std::mt19937_64 rng(8);
  HmmModel m = fixture::random_spline_model(2, 2, 5, rng);
  SequenceSet data = fixture::single(fixture::random_sequence(200, 2, rng));
  LikelihoodEvaluator ev(data, m);
  auto obj = [&](std::span<const double> x, std::span<double> g) {
    HmmModel c = m;
    unpack_parameters(c, x);
    const double v = ev.value_and_gradient(c, g);
    for (auto& gi : g)
      gi = -gi;
    return -v;
  };
  LbfgsResult r = minimize_lbfgs(obj, pack_parameters(m), LbfgsSettings{});
  REQUIRE(r.history.size() >= 2);
  for (std::size_t i = 1; i < r.history.size(); ++i)
    CHECK(r.history[i] <= r.history[i - 1]);
}

TEST_CASE("L-BFGS on the Rosenbrock function")
{
  auto rosen = [](std::span<const double> x, std::span<double> g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2 * a - 400 * x[0] * b;
    g[1] = 200 * b;
    return a * a + 100 * b * b;
  };
  LbfgsResult r = minimize_lbfgs(rosen, { -1.2, 1.0 }, LbfgsSettings{ 1e-8, 0.0, 5, 2000, 10 });
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("non-finite start is an init failure")
{
  std::mt19937_64 rng(9);
  HmmModel m = fixture::random_spline_model(2, 2, 5, rng);
  Sequence s = fixture::random_sequence(20, 2, rng);
  s.observations(3, 0) = 7.0;   // outside every state's support
  OptimizerConfig opt;
  opt.restarts = 0;
  try {
    fit_from(fixture::single(s), m, opt);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::init_failure);
  }
}
