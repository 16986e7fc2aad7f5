#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nphmm {

struct LbfgsSettings
{
  double grad_tol = 1e-5;   // on the infinity norm
  double rel_tol = 1e-10;   // relative objective change over `patience` iterations
  int patience = 5;
  int max_iter = 2000;
  int memory = 10;
};

struct LbfgsResult
{
  std::vector<double> x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string status;
  std::vector<double> history;   // objective after every accepted iteration
};

//! Objective writes the gradient into grad and returns the value. A
//! non-finite value marks an infeasible point; the line search backs off.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

//! Limited-memory BFGS minimization with Armijo backtracking. The objective
//! is non-increasing across accepted iterations.
LbfgsResult minimize_lbfgs(const Objective& objective, std::vector<double> x0,
                           const LbfgsSettings& settings);

} // namespace nphmm
