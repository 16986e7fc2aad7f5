#include "fixtures.hpp"
#include "oracles.hpp"

#include "nphmm/error.hpp"
#include "nphmm/evaluation.hpp"
#include "nphmm/parallel.hpp"
#include "nphmm/simulation.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace nphmm;

namespace {

DensityFn normal2(double m1, double m2)
{
  return [=](std::span<const double> y) {
    const double a = y[0] - m1, b = y[1] - m2;
    return std::exp(-0.5 * (a * a + b * b)) / (2 * std::numbers::pi);
  };
}

SequenceSet small_copula_data(int length, std::uint64_t seed)
{
  ScenarioConfig sc = ScenarioConfig::default_copula_gamma();
  sc.length = length;
  sc.seed = seed;
  return fixture::single(simulate_run(sc, 0).sequence);
}

} // namespace

TEST_CASE("KLD of a density with itself is zero")
{
  GridAxis g[2] = { { -8, 8, 200 }, { -8, 8, 200 } };
  CHECK(std::abs(kld(normal2(0, 0), normal2(0, 0), g)) <= 1e-8);

  std::mt19937_64 rng(1);
  TensorEmission e = fixture::random_emission(2, 7, rng);
  DensityFn f = [&](std::span<const double> y) { return e.density(y); };
  GridAxis u[2] = { { 0, 1, 200 }, { 0, 1, 200 } };
  CHECK(std::abs(kld(f, f, u)) <= 1e-8);
}

TEST_CASE("KLD of shifted Gaussians matches the closed form")
{
  GridAxis g[2] = { { -9, 10, 400 }, { -9, 10, 400 } };
  CHECK(kld(normal2(0, 0), normal2(1, 1), g) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(kld(normal2(0, 0), normal2(0.5, 0), g) == doctest::Approx(0.125).epsilon(1e-3));
}

TEST_CASE("KLD floors q")
{
  GridAxis g[2] = { { -5, 5, 100 }, { -5, 5, 100 } };
  DensityFn zero = [](std::span<const double>) { return 0.0; };
  const double v = kld(normal2(0, 0), zero, g);
  CHECK(std::isfinite(v));
  CHECK(v > 100.0);
  GridAxis bad[1] = { { 0, 1, 10 } };
  CHECK_THROWS_AS(kld(normal2(0, 0), normal2(0, 0), std::span<const GridAxis>(bad, 0)), Error);
}

TEST_CASE("decoding accuracy")
{
  std::vector<int> a{ 0, 0, 1, 1, 0, 1 };
  CHECK(decoding_accuracy(a, a) == 1.0);
  std::vector<int> c;
  for (int x : a)
    c.push_back(1 - x);
  CHECK(decoding_accuracy(a, c) == 1.0);
  std::vector<int> shorter{ 0, 1 };
  CHECK_THROWS_AS(decoding_accuracy(a, shorter), Error);

  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> s3(0, 2);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<int> t(12), d(12);
    for (int i = 0; i < 12; ++i) {
      t[i] = s3(rng);
      d[i] = s3(rng);
    }
    CHECK(decoding_accuracy(t, d) == doctest::Approx(oracle::brute_accuracy(t, d, 3)).epsilon(1e-15));

    // Relabeling both paths the same way changes nothing.
    std::vector<int> perm{ 2, 0, 1 };
    std::vector<int> pt, pd;
    for (int i = 0; i < 12; ++i) {
      pt.push_back(perm[t[i]]);
      pd.push_back(perm[d[i]]);
    }
    CHECK(decoding_accuracy(pt, pd) == decoding_accuracy(t, d));
  }
}

TEST_CASE("best alignment undoes a label swap")
{
  std::vector<int> t{ 0, 0, 1, 1, 2, 2, 0 };
  std::vector<int> d{ 1, 1, 2, 2, 0, 0, 1 };
  auto perm = best_alignment(t, d, 3);
  for (std::size_t i = 0; i < t.size(); ++i) {
    // new state k is old state perm[k], so old label d maps to k with perm[k] == d
    int k = 0;
    while (perm[k] != d[i])
      ++k;
    CHECK(k == t[i]);
  }
}

TEST_CASE("density check")
{
  std::mt19937_64 rng(3);
  TensorEmission e = fixture::random_emission(2, 8, rng, 2.0);
  DensityCheck c = check_emission(e, 400);
  CHECK(c.ok);
  CHECK(c.min_value >= 0.0);
  CHECK(std::abs(c.integral - 1.0) <= 1e-6);
}

TEST_CASE("within-sequence folds")
{
  SequenceSet data = small_copula_data(500, 4);
  CvPlan plan;
  plan.n_folds = 4;
  plan.seed = 11;
  plan.candidates = { { 5 } };
  auto a = make_folds(data, plan);
  auto b = make_folds(data, plan);
  CHECK(a == b);
  REQUIRE(a.size() == 4);
  for (const auto& f : a) {
    CHECK(f.size() == 50);
    CHECK(std::is_sorted(f.begin(), f.end()));
  }
  plan.seed = 12;
  CHECK(make_folds(data, plan) != a);

  CvPlan between;
  between.mode = CvMode::between_sequence;
  between.n_folds = 3;
  between.candidates = { { 5 } };
  CHECK_THROWS_AS(between.validate(data), Error);
  SequenceSet many;
  many.dim = 2;
  for (int m = 0; m < 7; ++m)
    many.sequences.push_back(data.sequences[0]);
  auto folds = make_folds(many, between);
  REQUIRE(folds.size() == 3);
  std::vector<int> seen(7, 0);
  for (const auto& f : folds)
    for (auto [m, t] : f) {
      CHECK(t == -1);
      ++seen[m];
    }
  for (int s : seen)
    CHECK(s == 1);

  CvPlan bad;
  bad.holdout = 0.7;
  bad.candidates = { { 5 } };
  CHECK_THROWS_AS(bad.validate(data), Error);
}

TEST_CASE("selection: ties go to the smaller count, disqualified rows are skipped")
{
  std::vector<CvRow> rows(3);
  rows[0].counts = { 7 };
  rows[0].mean_score = -10.0;
  rows[1].counts = { 8 };
  rows[1].mean_score = -10.0;
  rows[2].counts = { 9 };
  rows[2].mean_score = -12.0;
  CHECK(select_candidate(rows) == 0);
  rows[2].mean_score = -9.0;
  CHECK(select_candidate(rows) == 2);
  rows[2].disqualified = true;
  CHECK(select_candidate(rows) == 0);
  rows[0].disqualified = rows[1].disqualified = true;
  CHECK_THROWS_AS(select_candidate(rows), Error);
}

TEST_CASE("cross-validation with one candidate, reproducible")
{
  SequenceSet data = small_copula_data(300, 5);
  CvPlan plan;
  plan.n_folds = 3;
  plan.candidates = { { 5 } };
  plan.check_densities = true;
  ModelConfig model;
  OptimizerConfig opt;
  opt.restarts = 0;
  CvResult a = cross_validate(data, plan, model, opt);
  REQUIRE(a.rows.size() == 1);
  CHECK(a.selected == 0);
  CHECK(a.rows[0].fold_scores.size() == 3);
  CHECK(std::isfinite(a.rows[0].mean_score));
  CHECK(a.density_checks == 3);
  CHECK(a.density_check_failures == 0);

  plan.candidates = { { 6 }, { 5 } };
  CvResult b = cross_validate(data, plan, model, opt);
  CvResult c = cross_validate(data, plan, model, opt);
  REQUIRE(b.rows.size() == 2);
  CHECK(b.rows[0].counts == std::vector<int>{ 5 });
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t f = 0; f < 3; ++f)
      CHECK(b.rows[r].fold_scores[f] == c.rows[r].fold_scores[f]);
  CHECK(b.selected == c.selected);
  // The count-5 row does not depend on the other candidates.
  CHECK(b.rows[0].mean_score == a.rows[0].mean_score);
}

TEST_CASE("within-sequence score is the held-out points' predictive log-density")
{
  SequenceSet data = small_copula_data(200, 6);
  CvPlan plan;
  plan.n_folds = 2;
  plan.candidates = { { 5 } };
  ModelConfig model;
  OptimizerConfig opt;
  opt.restarts = 0;
  CvResult r = cross_validate(data, plan, model, opt);
  auto folds = make_folds(data, plan);

  // Refit fold 0 by hand and recompute its score.
  SequenceSet train = data;
  for (auto [m, t] : folds[0])
    train.sequences[m].missing[t] = 1;
  ModelConfig cfg = model;
  cfg.support = r.support;
  cfg.basis_counts = { 5 };
  OptimizerConfig o = opt;
  o.seed = derive_seed(plan.seed, 0x666974ULL, 0);
  FitResult fr = fit_model(train, cfg, o);
  const double score = log_likelihood(fr.model, data.sequences[0]) - log_likelihood(fr.model, train.sequences[0]);
  CHECK(r.rows[0].fold_scores[0] == doctest::Approx(score).epsilon(1e-12));
  CHECK(score < 0.0);
}
