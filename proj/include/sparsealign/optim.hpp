#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace sparsealign {

/// Evaluates f(x) and writes df/dx into the second argument.
using Objective = std::function<double(const Eigen::VectorXd &, Eigen::VectorXd &)>;

struct BoundedLbfgsOptions {
  int memory = 10;
  int max_iterations = 15000;
  int max_evaluations = 15000;
  /// Stop when (f_k - f_{k+1}) <= ftol * max(|f_k|, |f_{k+1}|, 1).
  double ftol = 2.220446049250313e-09;
  /// Stop when the projected gradient's infinity norm drops below pgtol.
  double pgtol = 1e-5;
  int max_backtracks = 40;
};

enum class OptimStatus {
  kGradientTolerance,
  kFunctionTolerance,
  kMaxIterations,
  kMaxEvaluations,
  kLineSearchFailed,
};

std::string to_string(OptimStatus status);

struct BoundedLbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  OptimStatus status = OptimStatus::kGradientTolerance;
};

/// Limited-memory quasi-Newton descent on the box lower <= x <= upper.
///
/// Variables at a bound whose gradient points outward are held fixed for
/// the step; the two-loop direction is computed on the free set and the
/// step follows the projected path with Armijo backtracking. Every accepted
/// iterate strictly decreases f, so the result never exceeds f(clamp(x0)).
BoundedLbfgsResult minimize_bounded_lbfgs(const Objective &objective, const Eigen::VectorXd &x0,
                                          const Eigen::VectorXd &lower, const Eigen::VectorXd &upper,
                                          const BoundedLbfgsOptions &options = {});

/// max_i |x_i - clamp(x_i - g_i)|.
double projected_gradient_norm(const Eigen::VectorXd &x, const Eigen::VectorXd &g,
                               const Eigen::VectorXd &lower, const Eigen::VectorXd &upper);

}  // namespace sparsealign
