#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance driver. Each one recomputes a library result by brute force.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sparsealign/forward.hpp"
#include "sparsealign/solver.hpp"
#include "test_support.hpp"

namespace sparsealign::test_support {

inline MarkerSet single_marker(int dim, const Point &r, double w = 1.0) {
  MarkerSet m;
  m.dim = dim;
  m.add(r, w);
  return m;
}

inline double stack_dot(const TiltStack &a, const TiltStack &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

/// ||render - data||^2 accumulated pixel by pixel in long double.
inline double naive_loss(const MarkerSet &markers, const DeformationModel &model, const TiltStack &data) {
  const TiltStack rendered = render_stack(markers, model, data.geometry);
  long double sum = 0.0L;
  for (std::size_t i = 0; i < data.values.size(); ++i) {
    const long double d = static_cast<long double>(rendered.values[i]) - data.values[i];
    sum += d * d;
  }
  return static_cast<double>(sum);
}

/// Grid node minimizing <residual, render(unit marker at node)>, lowest index on ties.
inline std::size_t exhaustive_lmo(const TiltStack &residual, const DeformationModel &model,
                                  const CandidateGrid &grid) {
  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double v = stack_dot(render_stack(single_marker(residual.geometry.dim, grid.node(k)), model,
                                            residual.geometry),
                               residual);
    if (v < best_score) {
      best_score = v;
      best = k;
    }
  }
  return best;
}

/// Unconstrained least-squares weights from dense rendered columns.
inline Eigen::VectorXd normal_equation_weights(const MarkerSet &markers, const DeformationModel &model,
                                               const TiltStack &data) {
  const auto rows = static_cast<Eigen::Index>(data.values.size());
  Eigen::MatrixXd a(rows, static_cast<Eigen::Index>(markers.size()));
  for (std::size_t j = 0; j < markers.size(); ++j) {
    const TiltStack col = render_stack(single_marker(markers.dim, markers.locations[j]), model, data.geometry);
    for (Eigen::Index i = 0; i < rows; ++i) a(i, static_cast<Eigen::Index>(j)) = col.values[static_cast<std::size_t>(i)];
  }
  const Eigen::Map<const Eigen::VectorXd> b(data.values.data(), rows);
  return (a.transpose() * a).ldlt().solve(a.transpose() * b);
}

/// Exhaustive Otsu scan: for each of the 255 interior bin edges, split the
/// values by bin index and evaluate the between-class variance from scratch.
inline double brute_force_otsu(const std::vector<double> &values) {
  const double lo = *std::min_element(values.begin(), values.end());
  const double hi = *std::max_element(values.begin(), values.end());
  const double width = (hi - lo) / 256.0;
  std::vector<int> bin(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) bin[i] = std::min(255, static_cast<int>((values[i] - lo) / width));
  double best = -1.0;
  int best_k = 0;
  for (int k = 0; k < 255; ++k) {
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (int b : bin) (b <= k ? (n0 += 1, s0 += b) : (n1 += 1, s1 += b));
    if (n0 == 0 || n1 == 0) continue;
    const double d = s0 / n0 - s1 / n1;
    const double between = n0 * n1 * d * d;
    if (between > best) {
      best = between;
      best_k = k;
    }
  }
  return lo + (best_k + 1) * width;
}

/// Largest relative deviation between the analytic image-loss gradient
/// (locations, weights, deformation) and central differences with step h.
/// Entries below 1e-6 of the largest gradient entry are compared absolutely.
inline double max_gradient_error(const MarkerSet &markers, const DeformationModel &model, const TiltStack &data,
                                 double h = 1e-6) {
  LossGradient grad;
  image_loss(markers, model, data, {}, {true, true, true}, &grad);
  double scale = 0.0;
  for (const Point &p : grad.locations) scale = std::max(scale, p.cwiseAbs().maxCoeff());
  scale = std::max({scale, grad.weights.cwiseAbs().maxCoeff(), grad.deformation.cwiseAbs().maxCoeff()});
  const double floor = 1e-6 * scale;
  double worst = 0.0;
  auto check = [&](double analytic, double plus, double minus) {
    worst = std::max(worst, relative_error(analytic, (plus - minus) / (2 * h), floor));
  };
  for (std::size_t j = 0; j < markers.size(); ++j) {
    for (int a = 0; a < 3; ++a) {
      if (markers.dim == 2 && a == kY) continue;
      MarkerSet p = markers, m = markers;
      p.locations[j][a] += h;
      m.locations[j][a] -= h;
      check(grad.locations[j][a], image_loss(p, model, data), image_loss(m, model, data));
    }
    MarkerSet p = markers, m = markers;
    p.weights[j] += h;
    m.weights[j] -= h;
    check(grad.weights[static_cast<Eigen::Index>(j)], image_loss(p, model, data), image_loss(m, model, data));
  }
  const Eigen::VectorXd p0 = model.parameters();
  for (int k = 0; k < model.parameter_count(); ++k) {
    DeformationModel p = model, m = model;
    Eigen::VectorXd pp = p0, pm = p0;
    pp[k] += h;
    pm[k] -= h;
    p.set_parameters(pp);
    m.set_parameters(pm);
    check(grad.deformation[k], image_loss(markers, p, data), image_loss(markers, m, data));
  }
  return worst;
}

}  // namespace sparsealign::test_support
