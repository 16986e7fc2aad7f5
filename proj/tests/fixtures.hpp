#pragma once

#include "oracles.hpp"

#include "nphmm/hmm.hpp"

#include <random>
#include <vector>

namespace fixture {

inline std::vector<nphmm::SplineBasis> unit_bases(int D, int n, double lo = 0.0, double hi = 1.0)
{
  std::vector<nphmm::SplineBasis> b;
  for (int d = 0; d < D; ++d)
    b.emplace_back(d + 1, n, lo, hi);
  return b;
}

inline nphmm::TensorEmission random_emission(int D, int n, std::mt19937_64& rng, double sd = 1.0)
{
  std::normal_distribution<double> z(0.0, sd);
  nphmm::TensorEmission e(unit_bases(D, n));
  std::vector<double> free(e.num_free());
  for (auto& v : free)
    v = z(rng);
  e.set_free_beta(free);
  return e;
}

// N-state spline HMM on [0, 1]^D with random coefficients and t.p.m.
inline nphmm::HmmModel random_spline_model(int N, int D, int n, std::mt19937_64& rng)
{
  std::vector<nphmm::TensorEmission> em;
  for (int i = 0; i < N; ++i)
    em.push_back(random_emission(D, n, rng));
  return nphmm::HmmModel(nphmm::TransitionMatrix(oracle::random_tpm(N, rng)), std::move(em));
}

inline nphmm::Sequence random_sequence(int T, int D, std::mt19937_64& rng, double lo = 0.02, double hi = 0.98)
{
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd y(T, D);
  for (int t = 0; t < T; ++t)
    for (int d = 0; d < D; ++d)
      y(t, d) = u(rng);
  return nphmm::make_sequence(std::move(y));
}

inline nphmm::SequenceSet single(nphmm::Sequence s)
{
  nphmm::SequenceSet set;
  set.dim = static_cast<int>(s.observations.cols());
  set.sequences.push_back(std::move(s));
  return set;
}

inline Eigen::MatrixXd gamma_of(const nphmm::HmmModel& m)
{
  return std::get<nphmm::TransitionMatrix>(m.transition()).matrix();
}

} // namespace fixture
