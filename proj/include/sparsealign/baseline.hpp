#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "sparsealign/deformation.hpp"
#include "sparsealign/geometry.hpp"
#include "sparsealign/optim.hpp"
#include "sparsealign/types.hpp"

namespace sparsealign {

/// Labelled projected-marker traces: marker j keeps index j in every tilt.
struct MarkerTraces {
  int dim = 2;
  std::size_t frames = 0;
  std::size_t markers = 0;
  /// Row-major [frame][marker].
  std::vector<DetectorPoint> points;
  std::vector<std::uint8_t> valid;

  MarkerTraces() = default;
  MarkerTraces(int dim, std::size_t frames, std::size_t markers);

  DetectorPoint &at(std::size_t t, std::size_t j) { return points[t * markers + j]; }
  const DetectorPoint &at(std::size_t t, std::size_t j) const { return points[t * markers + j]; }
  bool is_valid(std::size_t t, std::size_t j) const { return valid[t * markers + j] != 0; }
  std::size_t valid_count() const;
};

/// Exact traces q_{t,j} = A_theta (r_j + D_t(P, r_j)).
MarkerTraces generate_traces(const MarkerSet &markers, const DeformationModel &model,
                             const TiltGeometry &geometry);

/// Sum over valid (t, j) of |q~_{t,j} - A_theta (r_j + D_t(P, r_j))|^2, with
/// optional gradients (locations in sample coordinates, deformation parameters).
double trace_loss(const MarkerTraces &traces, const MarkerSet &markers, const DeformationModel &model,
                  const TiltGeometry &geometry, std::vector<Point> *location_gradient = nullptr,
                  Eigen::VectorXd *deformation_gradient = nullptr);

struct DomingFitOptions {
  /// Bounds on the fitted locations; unbounded by default.
  Box location_box{Point::Constant(-std::numeric_limits<double>::infinity()),
                   Point::Constant(std::numeric_limits<double>::infinity())};
  double deformation_bound = 10.0;
  BoundedLbfgsOptions optimizer{10, 20000, 40000, 0.0, 1e-11, 40};
};

struct DomingFit {
  MarkerSet markers;
  DeformationModel model;
  /// Final trace loss.
  double residual = 0.0;
  int iterations = 0;
  OptimStatus status = OptimStatus::kGradientTolerance;
};

/// Doming-model baseline: joint bounded quasi-Newton fit of initial marker
/// locations and deformation coefficients to labelled traces. Locations
/// start from the first valid trace entry back-projected onto z = 0 and P
/// starts at zero. `model_template` fixes the polynomial basis.
DomingFit dm_fit(const MarkerTraces &traces, const TiltGeometry &geometry, const DeformationModel &model_template,
                 const DomingFitOptions &options = {});

}  // namespace sparsealign
