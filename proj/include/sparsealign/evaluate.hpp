#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "sparsealign/deformation.hpp"
#include "sparsealign/types.hpp"

namespace sparsealign {

/// Cell-centred lattice over a box. 2D grids use shape {nx, 1, nz} and sit
/// in the y = 0 plane. index = (iz * ny + iy) * nx + ix.
struct EvaluationGrid {
  int dim = 2;
  Box box;
  std::array<int, 3> shape{1, 1, 1};

  std::size_t size() const;
  Point spacing() const;
  Point node(std::size_t index) const;
  /// Index of the node closest to p; throws DataError when p is outside the box.
  std::size_t nearest_node(const Point &p) const;
};

/// n nodes per active axis over `fov`; 2D uses axes x and z.
EvaluationGrid make_evaluation_grid(const Box &fov, int dim, int nodes_per_axis);
/// 1000^2 in 2D, 100^3 in 3D.
EvaluationGrid default_evaluation_grid(const Box &fov, int dim);

struct ErrorField {
  EvaluationGrid grid;
  std::vector<double> values;
};

/// |D_1^gt(r) - D_1^est(r)|^2 at every grid node.
ErrorField deformation_error_field(const DeformationModel &gt, const DeformationModel &est,
                                   const EvaluationGrid &grid);

struct MarkerMatch {
  std::size_t estimate = 0;
  std::size_t truth = 0;
  double distance = 0.0;
};

struct MarkerMatching {
  std::vector<MarkerMatch> matches;
  /// Estimated markers without a partner (spurious detections).
  std::vector<std::size_t> spurious;
  /// Ground-truth markers without a partner.
  std::vector<std::size_t> missed;

  double total_distance() const;
};

/// Greedy injective matching by ascending distance, ignoring pairs farther
/// apart than `radius`. Ties are broken by (estimate, truth) index.
MarkerMatching match_markers(const MarkerSet &estimate, const MarkerSet &truth, double radius);

struct ErrorReport {
  double e_global = 0.0;
  double e_markers = 0.0;
  /// E at each ground-truth marker, in input order.
  std::vector<double> marker_errors;
  EvaluationGrid grid;
  MarkerMatching matching;
  bool has_matching = false;
};

/// E_global = field mean; E_markers from the nearest grid node of each
/// ground-truth marker.
ErrorReport summarize_errors(const ErrorField &field, const MarkerSet &truth_markers);

/// As above, but E at the markers is evaluated exactly from the models.
ErrorReport summarize_errors(const ErrorField &field, const MarkerSet &truth_markers,
                             const DeformationModel &gt, const DeformationModel &est);

/// Full comparison including the marker matching table.
ErrorReport evaluate_alignment(const MarkerSet &truth_markers, const DeformationModel &gt,
                               const MarkerSet &estimate_markers, const DeformationModel &est,
                               const EvaluationGrid &grid, double match_radius);

}  // namespace sparsealign
