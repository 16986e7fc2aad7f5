#include "nphmm/optimizer.hpp"

#include "nphmm/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace nphmm {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b)
{
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double inf_norm(const std::vector<double>& v)
{
  double m = 0.0;
  for (double x : v)
    m = std::max(m, std::abs(x));
  return m;
}

struct Pair
{
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

std::vector<double> two_loop(const std::deque<Pair>& mem, const std::vector<double>& g)
{
  std::vector<double> q = g;
  std::vector<double> alpha(mem.size());
  for (std::size_t k = mem.size(); k-- > 0;) {
    alpha[k] = mem[k].rho * dot(mem[k].s, q);
    for (std::size_t i = 0; i < q.size(); ++i)
      q[i] -= alpha[k] * mem[k].y[i];
  }
  if (!mem.empty()) {
    const auto& last = mem.back();
    const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
    for (double& v : q)
      v *= gamma;
  }
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const double b = mem[k].rho * dot(mem[k].y, q);
    for (std::size_t i = 0; i < q.size(); ++i)
      q[i] += mem[k].s[i] * (alpha[k] - b);
  }
  for (double& v : q)
    v = -v;
  return q;
}

} // namespace

LbfgsResult minimize_lbfgs(const Objective& objective, std::vector<double> x0,
                           const LbfgsSettings& settings)
{
  require(settings.max_iter >= 0 && settings.memory >= 1 && settings.patience >= 1,
          "invalid optimizer settings");
  const std::size_t n = x0.size();
  LbfgsResult res;
  res.x = std::move(x0);
  std::vector<double> g(n, 0.0);
  res.value = objective(res.x, g);
  res.evaluations = 1;
  if (!std::isfinite(res.value))
    fail(ErrorCode::init_failure, "objective is not finite at the starting point");
  res.grad_norm = inf_norm(g);

  if (n == 0 || res.grad_norm <= settings.grad_tol) {
    res.converged = true;
    res.status = "gradient-tolerance";
    return res;
  }

  std::deque<Pair> mem;
  std::vector<double> x_new(n), g_new(n);
  bool steepest_retry = false;
  res.status = "max-iterations";

  while (res.iterations < settings.max_iter) {
    std::vector<double> dir = two_loop(mem, g);
    double slope = dot(dir, g);
    if (!(slope < 0.0)) {
      mem.clear();
      dir = g;
      for (double& v : dir)
        v = -v;
      slope = dot(dir, g);
    }
    double step = mem.empty() ? std::min(1.0, 1.0 / std::max(inf_norm(g), 1e-300)) : 1.0;

    bool accepted = false;
    double f_new = 0.0;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < n; ++i)
        x_new[i] = res.x[i] + step * dir[i];
      f_new = objective(x_new, g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= res.value + 1e-4 * step * slope && f_new < res.value) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }

    if (!accepted) {
      if (!mem.empty() && !steepest_retry) {
        mem.clear();
        steepest_retry = true;
        continue;
      }
      res.status = "line-search-stalled";
      // No descent possible at machine precision; treat a small gradient as
      // a stationary point.
      res.converged = res.grad_norm <= std::sqrt(settings.grad_tol);
      return res;
    }
    steepest_retry = false;

    Pair p{ std::vector<double>(n), std::vector<double>(n), 0.0 };
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = x_new[i] - res.x[i];
      p.y[i] = g_new[i] - g[i];
    }
    const double sy = dot(p.s, p.y);
    if (sy > 1e-10 * std::sqrt(dot(p.s, p.s) * dot(p.y, p.y))) {
      p.rho = 1.0 / sy;
      mem.push_back(std::move(p));
      if (static_cast<int>(mem.size()) > settings.memory)
        mem.pop_front();
    }

    res.x.swap(x_new);
    g.swap(g_new);
    res.value = f_new;
    res.grad_norm = inf_norm(g);
    ++res.iterations;
    res.history.push_back(res.value);

    if (res.grad_norm <= settings.grad_tol) {
      res.converged = true;
      res.status = "gradient-tolerance";
      return res;
    }
    const int h = static_cast<int>(res.history.size());
    if (h > settings.patience) {
      const double past = res.history[h - 1 - settings.patience];
      if ((past - res.value) <= settings.rel_tol * std::max(1.0, std::abs(res.value))) {
        res.converged = true;
        res.status = "relative-change";
        return res;
      }
    }
  }
  return res;
}

} // namespace nphmm
