#include "sparsealign/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace sparsealign {

namespace {

Eigen::VectorXd clamp(const Eigen::VectorXd &x, const Eigen::VectorXd &lo, const Eigen::VectorXd &hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

struct Pair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho;
};

}  // namespace

std::string to_string(OptimStatus status) {
  switch (status) {
    case OptimStatus::kGradientTolerance: return "gradient_tolerance";
    case OptimStatus::kFunctionTolerance: return "function_tolerance";
    case OptimStatus::kMaxIterations: return "max_iterations";
    case OptimStatus::kMaxEvaluations: return "max_evaluations";
    case OptimStatus::kLineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

double projected_gradient_norm(const Eigen::VectorXd &x, const Eigen::VectorXd &g,
                               const Eigen::VectorXd &lower, const Eigen::VectorXd &upper) {
  if (x.size() == 0) return 0.0;
  return (x - clamp(x - g, lower, upper)).cwiseAbs().maxCoeff();
}

BoundedLbfgsResult minimize_bounded_lbfgs(const Objective &objective, const Eigen::VectorXd &x0,
                                          const Eigen::VectorXd &lower, const Eigen::VectorXd &upper,
                                          const BoundedLbfgsOptions &options) {
  const Eigen::Index n = x0.size();
  if (lower.size() != n || upper.size() != n) throw std::invalid_argument("bounds size mismatch");
  if ((lower.array() > upper.array()).any()) throw std::invalid_argument("lower bound above upper bound");

  BoundedLbfgsResult res;
  res.x = clamp(x0, lower, upper);
  res.gradient = Eigen::VectorXd::Zero(n);
  res.value = objective(res.x, res.gradient);
  res.evaluations = 1;
  if (n == 0) return res;
  if (!std::isfinite(res.value)) throw std::runtime_error("objective is not finite at the initial point");

  std::deque<Pair> memory;
  Eigen::VectorXd x_new(n), g_new(n), d(n), q(n);
  Eigen::Array<bool, Eigen::Dynamic, 1> active(n);

  while (true) {
    if (projected_gradient_norm(res.x, res.gradient, lower, upper) <= options.pgtol) {
      res.status = OptimStatus::kGradientTolerance;
      return res;
    }
    if (res.iterations >= options.max_iterations) {
      res.status = OptimStatus::kMaxIterations;
      return res;
    }

    for (Eigen::Index i = 0; i < n; ++i) {
      const double gi = res.gradient[i];
      active[i] = (res.x[i] <= lower[i] && gi > 0.0) || (res.x[i] >= upper[i] && gi < 0.0) ||
                  lower[i] == upper[i];
    }

    bool retried = false;
    while (true) {
      // Two-loop recursion restricted to the free variables.
      q = active.select(Eigen::VectorXd::Zero(n), res.gradient);
      std::vector<double> alpha(memory.size());
      for (std::size_t k = memory.size(); k-- > 0;) {
        alpha[k] = memory[k].rho * memory[k].s.dot(q);
        q -= alpha[k] * memory[k].y;
      }
      if (!memory.empty()) {
        const Pair &last = memory.back();
        q *= last.s.dot(last.y) / last.y.squaredNorm();
      }
      for (std::size_t k = 0; k < memory.size(); ++k) {
        const double beta = memory[k].rho * memory[k].y.dot(q);
        q += (alpha[k] - beta) * memory[k].s;
      }
      d = active.select(Eigen::VectorXd::Zero(n), -q);
      double slope = res.gradient.dot(d);
      if (!(slope < 0.0)) {
        memory.clear();
        d = active.select(Eigen::VectorXd::Zero(n), -res.gradient);
        slope = res.gradient.dot(d);
      }

      double step = 1.0;
      if (memory.empty()) step = std::min(1.0, 1.0 / std::max(d.cwiseAbs().maxCoeff(), 1e-300));

      bool accepted = false;
      for (int bt = 0; bt < options.max_backtracks; ++bt) {
        if (res.evaluations >= options.max_evaluations) break;
        x_new = clamp(res.x + step * d, lower, upper);
        const double predicted = res.gradient.dot(x_new - res.x);
        if (predicted >= 0.0 && (x_new - res.x).cwiseAbs().maxCoeff() == 0.0) break;
        const double f_new = objective(x_new, g_new);
        ++res.evaluations;
        if (std::isfinite(f_new) && g_new.allFinite() && f_new <= res.value + 1e-4 * predicted &&
            f_new < res.value) {
          const Eigen::VectorXd s = x_new - res.x;
          const Eigen::VectorXd y = g_new - res.gradient;
          const double sy = s.dot(y);
          if (sy > std::numeric_limits<double>::epsilon() * y.squaredNorm()) {
            memory.push_back({s, y, 1.0 / sy});
            if (static_cast<int>(memory.size()) > options.memory) memory.pop_front();
          }
          const double f_old = res.value;
          res.x = x_new;
          res.value = f_new;
          res.gradient = g_new;
          ++res.iterations;
          accepted = true;
          if (f_old - f_new <= options.ftol * std::max({std::abs(f_old), std::abs(f_new), 1.0})) {
            res.status = OptimStatus::kFunctionTolerance;
            return res;
          }
          break;
        }
        // Safeguarded quadratic interpolation of the backtracking step.
        double next = 0.5 * step;
        if (std::isfinite(f_new)) {
          const double denom = 2.0 * (f_new - res.value - step * slope);
          if (denom > 0.0) next = std::clamp(-slope * step * step / denom, 0.1 * step, 0.5 * step);
        }
        step = next;
      }
      if (accepted) break;
      if (res.evaluations >= options.max_evaluations) {
        res.status = OptimStatus::kMaxEvaluations;
        return res;
      }
      if (!memory.empty() && !retried) {
        memory.clear();
        retried = true;
        continue;
      }
      res.status = OptimStatus::kLineSearchFailed;
      return res;
    }
  }
}

}  // namespace sparsealign
