#include "sparsealign/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

namespace sparsealign {

std::size_t EvaluationGrid::size() const {
  return static_cast<std::size_t>(shape[0]) * static_cast<std::size_t>(shape[1]) *
         static_cast<std::size_t>(shape[2]);
}

Point EvaluationGrid::spacing() const {
  Point h = Point::Zero();
  for (int a = 0; a < 3; ++a) h[a] = (box.upper[a] - box.lower[a]) / shape[a];
  return h;
}

Point EvaluationGrid::node(std::size_t index) const {
  const auto nx = static_cast<std::size_t>(shape[0]);
  const auto ny = static_cast<std::size_t>(shape[1]);
  const std::size_t i[3] = {index % nx, (index / nx) % ny, index / (nx * ny)};
  const Point h = spacing();
  Point p;
  for (int a = 0; a < 3; ++a) p[a] = box.lower[a] + (static_cast<double>(i[a]) + 0.5) * h[a];
  return p;
}

std::size_t EvaluationGrid::nearest_node(const Point &p) const {
  if (!box.contains(p, 1e-12 * (1.0 + box.extent().norm()))) {
    std::ostringstream os;
    os << "marker at (" << p.x() << ", " << p.y() << ", " << p.z() << ") lies outside the evaluation grid";
    throw DataError(os.str());
  }
  const Point h = spacing();
  std::array<std::size_t, 3> i{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    if (shape[a] == 1) continue;
    const double f = std::floor((p[a] - box.lower[a]) / h[a]);
    i[a] = static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(shape[a] - 1)));
  }
  return (i[2] * static_cast<std::size_t>(shape[1]) + i[1]) * static_cast<std::size_t>(shape[0]) + i[0];
}

EvaluationGrid make_evaluation_grid(const Box &fov, int dim, int nodes_per_axis) {
  if (dim != 2 && dim != 3) throw ConfigError("evaluation grid dimension must be 2 or 3");
  if (nodes_per_axis < 1) throw ConfigError("evaluation grid needs at least one node per axis");
  EvaluationGrid g;
  g.dim = dim;
  g.box = fov;
  g.shape = {nodes_per_axis, dim == 3 ? nodes_per_axis : 1, nodes_per_axis};
  if (dim == 2) g.box.lower.y() = g.box.upper.y() = 0.0;
  return g;
}

EvaluationGrid default_evaluation_grid(const Box &fov, int dim) {
  return make_evaluation_grid(fov, dim, dim == 2 ? 1000 : 100);
}

ErrorField deformation_error_field(const DeformationModel &gt, const DeformationModel &est,
                                   const EvaluationGrid &grid) {
  if (gt.dim() != est.dim() || gt.dim() != grid.dim) {
    throw ConfigError("deformation models and evaluation grid must share a dimension");
  }
  ErrorField field{grid, std::vector<double>(grid.size())};
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    const Point r = grid.node(i);
    field.values[i] = (gt.displacement(r, 1.0) - est.displacement(r, 1.0)).squaredNorm();
  }
  return field;
}

double MarkerMatching::total_distance() const {
  double s = 0.0;
  for (const auto &m : matches) s += m.distance;
  return s;
}

MarkerMatching match_markers(const MarkerSet &estimate, const MarkerSet &truth, double radius) {
  if (!(radius > 0.0)) throw ConfigError("matching radius must be positive");
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < estimate.size(); ++i)
    for (std::size_t j = 0; j < truth.size(); ++j) {
      const double d = (estimate.locations[i] - truth.locations[j]).norm();
      if (d <= radius) pairs.emplace_back(d, i, j);
    }
  std::sort(pairs.begin(), pairs.end());

  MarkerMatching out;
  std::vector<bool> est_used(estimate.size(), false), gt_used(truth.size(), false);
  for (const auto &[d, i, j] : pairs) {
    if (est_used[i] || gt_used[j]) continue;
    est_used[i] = gt_used[j] = true;
    out.matches.push_back({i, j, d});
  }
  std::sort(out.matches.begin(), out.matches.end(),
            [](const MarkerMatch &a, const MarkerMatch &b) { return a.truth < b.truth; });
  for (std::size_t i = 0; i < estimate.size(); ++i)
    if (!est_used[i]) out.spurious.push_back(i);
  for (std::size_t j = 0; j < truth.size(); ++j)
    if (!gt_used[j]) out.missed.push_back(j);
  return out;
}

namespace {

double field_mean(const std::vector<double> &v) {
  if (v.empty()) throw DataError("error field is empty");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double marker_mean(const std::vector<double> &v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// nearest_node with the marker index prepended to any error.
std::size_t marker_node(const EvaluationGrid &grid, const MarkerSet &markers, std::size_t j) {
  try {
    return grid.nearest_node(markers.locations[j]);
  } catch (const DataError &e) {
    throw DataError("ground-truth marker " + std::to_string(j) + ": " + e.what());
  }
}

}  // namespace

ErrorReport summarize_errors(const ErrorField &field, const MarkerSet &truth_markers) {
  if (field.values.size() != field.grid.size()) throw DataError("error field size does not match its grid");
  ErrorReport r;
  r.grid = field.grid;
  r.e_global = field_mean(field.values);
  for (std::size_t j = 0; j < truth_markers.size(); ++j)
    r.marker_errors.push_back(field.values[marker_node(field.grid, truth_markers, j)]);
  r.e_markers = marker_mean(r.marker_errors);
  return r;
}

ErrorReport summarize_errors(const ErrorField &field, const MarkerSet &truth_markers, const DeformationModel &gt,
                             const DeformationModel &est) {
  if (field.values.size() != field.grid.size()) throw DataError("error field size does not match its grid");
  ErrorReport r;
  r.grid = field.grid;
  r.e_global = field_mean(field.values);
  for (std::size_t j = 0; j < truth_markers.size(); ++j) {
    marker_node(field.grid, truth_markers, j);  // containment check
    const Point &p = truth_markers.locations[j];
    r.marker_errors.push_back((gt.displacement(p, 1.0) - est.displacement(p, 1.0)).squaredNorm());
  }
  r.e_markers = marker_mean(r.marker_errors);
  return r;
}

ErrorReport evaluate_alignment(const MarkerSet &truth_markers, const DeformationModel &gt,
                               const MarkerSet &estimate_markers, const DeformationModel &est,
                               const EvaluationGrid &grid, double match_radius) {
  const ErrorField field = deformation_error_field(gt, est, grid);
  ErrorReport r = summarize_errors(field, truth_markers, gt, est);
  r.matching = match_markers(estimate_markers, truth_markers, match_radius);
  r.has_matching = true;
  return r;
}

}  // namespace sparsealign
