#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sparsealign/deformation.hpp"
#include "sparsealign/geometry.hpp"
#include "sparsealign/types.hpp"

namespace sparsealign {

/// How the projected Gaussian width is chosen for data that were low-pass
/// filtered before decimation.
enum class SigmaMode {
  /// sigma_eff = sqrt(shape_sigma^2 + antialias_sigma^2), matching the
  /// filtered data.
  kConsistent,
  /// sigma_eff = shape_sigma at every resolution.
  kFixed,
};

struct RenderOptions {
  SigmaMode sigma_mode = SigmaMode::kConsistent;
  /// Each Gaussian is rasterized within +-truncation * sigma_eff.
  double truncation = 6.0;
};

double effective_sigma(const TiltGeometry &geometry, SigmaMode mode);

/// q_{t,j} = A_theta (r_j + D_t(P, r_j)) for every marker at one frame.
std::vector<DetectorPoint> projected_locations(const MarkerSet &markers,
                                               const DeformationModel &model,
                                               const TiltGeometry &geometry,
                                               std::size_t frame);

/// Sampled 1D Gaussian profile; values[k] belongs to pixel first + k.
struct Profile {
  int first = 0;
  std::vector<double> values;
  int last() const { return first + static_cast<int>(values.size()); }
};

/// Unit-weight, peak-normalized response of one projected marker on one
/// frame. The 2D Gaussian factorizes into an s profile and a y profile.
struct Footprint {
  Profile s;
  Profile y;
  bool empty() const { return s.values.empty() || y.values.empty(); }
};

Footprint marker_footprint(const DetectorPoint &q, const DetectorGrid &grid, int dim,
                           double sigma, double truncation);
/// <footprint, frame>
double footprint_dot(const Footprint &f, std::span<const double> frame, const DetectorGrid &grid);
/// <footprint_a, footprint_b>
double footprint_overlap(const Footprint &a, const Footprint &b);
void footprint_accumulate(const Footprint &f, double weight, std::span<double> frame,
                          const DetectorGrid &grid);

/// Frame t = sum_j w_j exp(-|c - q_{t,j}|^2 / (2 sigma_eff^2)) at pixel centres c.
TiltStack render_stack(const MarkerSet &markers, const DeformationModel &model,
                       const TiltGeometry &geometry, const RenderOptions &options = {});

/// render_stack(markers, model, data.geometry) - data.
TiltStack residual_stack(const MarkerSet &markers, const DeformationModel &model,
                         const TiltStack &data, const RenderOptions &options = {});

struct GradientBlocks {
  bool locations = false;
  bool weights = false;
  bool deformation = false;
};

struct LossGradient {
  std::vector<Point> locations;
  Eigen::VectorXd weights;
  Eigen::VectorXd deformation;
};

/// Squared L2 image loss ||render - data||^2 with analytic gradients for the
/// requested blocks.
double image_loss(const MarkerSet &markers, const DeformationModel &model, const TiltStack &data,
                  const RenderOptions &options = {}, const GradientBlocks &blocks = {},
                  LossGradient *gradient = nullptr);

/// <residual, psi(r)>: inner product of a stack with the unit response of a
/// single marker at r under the given deformation.
double unit_response_inner_product(const Point &r, const DeformationModel &model,
                                   const TiltStack &stack, const RenderOptions &options = {});

}  // namespace sparsealign
