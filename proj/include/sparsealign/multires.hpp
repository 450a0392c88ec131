#pragma once

#include <string>
#include <vector>

#include "sparsealign/geometry.hpp"

namespace sparsealign {

/// Frames are low-pass filtered with a Gaussian of this many input pixels
/// (times the decimation factor) before decimation.
inline constexpr double kAntialiasSigmaPerFactor = 0.5;
/// Levels whose smallest detector axis would fall below this are dropped.
inline constexpr int kMinimumLevelPixels = 8;

/// Integer decimation factor between two resolutions; throws ConfigError
/// when it is not a positive integer.
int decimation_factor(double eta_in, double eta_out);

/// Gaussian-filters each frame with std f/2 pixels (reflect boundary) and
/// keeps every f-th pixel starting at index 0, where f = stack.eta / eta.
TiltStack downsample_stack(const TiltStack &stack, double eta);

/// Geometry of the stack downsample_stack would produce, without the data.
TiltGeometry downsample_geometry(const TiltGeometry &geometry, double eta);

struct ResolutionLevel {
  double eta = 1.0;
  double tolerance = 1e-6;
};

struct ResolutionSchedule {
  std::vector<ResolutionLevel> levels;
  /// Human-readable notes about levels dropped for being too coarse.
  std::vector<std::string> warnings;

  void validate() const;
};

ResolutionSchedule make_resolution_schedule(const std::vector<int> &data_shape,
                                            const std::vector<double> &base_etas,
                                            double tolerance);

}  // namespace sparsealign
