#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "sparsealign/deformation.hpp"
#include "sparsealign/forward.hpp"
#include "sparsealign/geometry.hpp"
#include "sparsealign/multires.hpp"
#include "sparsealign/optim.hpp"
#include "sparsealign/types.hpp"

namespace sparsealign {

struct SolverConfig {
  /// Outer (marker insertion) iterations per resolution level.
  int max_iterations = 20;
  /// LMO nodes per axis over the sample box; 0 derives the count from the
  /// detector pixel size of the level being solved.
  std::array<int, 3> candidate_grid{0, 0, 0};
  double prune_threshold = 0.1;
  /// Stop when |loss_n - loss_{n-1}| falls below this between iterations.
  double loss_tolerance = 1e-6;
  /// Repetitions of the weights / prune / deformation / support block.
  int bcd_rounds = 1;
  /// Region holding the markers; LMO candidates are drawn from it.
  Box sample_box;
  /// Support refinement box margin; negative selects 2 * shape_sigma.
  double refinement_margin = -1.0;
  /// |P| bound for every deformation coefficient.
  double deformation_bound = 10.0;
  bool prune_each_iteration = true;
  bool fit_deformation = true;
  /// Keep P at its initial value during the first iteration of a cold start.
  bool freeze_deformation_first_iteration = true;
  int weight_max_iterations = 500;
  double weight_tolerance = 1e-10;
  RenderOptions render;
  BoundedLbfgsOptions deformation_optimizer;
  BoundedLbfgsOptions support_optimizer;

  void validate() const;
};

enum class BcdStep { kEntry, kWeights, kPrune, kDeformation, kSupport };
std::string to_string(BcdStep step);

struct LossRecord {
  int level = 0;
  int iteration = 0;
  BcdStep step = BcdStep::kEntry;
  double loss = 0.0;
  std::size_t markers = 0;
};

struct SolverState {
  MarkerSet markers;
  DeformationModel model;
  /// render(markers, model) - data at the last evaluated point.
  TiltStack residual;
  double loss = 0.0;
  std::vector<LossRecord> history;
  /// Loss at the end of each outer iteration.
  std::vector<double> iteration_losses;
  int level = 0;
  int iterations = 0;

  static SolverState cold(int dim, DeformationModel model);
};

struct LossAndResidual {
  double loss = 0.0;
  TiltStack residual;
};

LossAndResidual loss_and_residual(const MarkerSet &markers, const DeformationModel &model,
                                  const TiltStack &data, const RenderOptions &options = {});

/// Regular lattice of candidate locations; index = (iz * ny + iy) * nx + ix.
struct CandidateGrid {
  Box box;
  std::array<int, 3> shape{1, 1, 1};
  std::size_t size() const;
  Point node(std::size_t index) const;
};

CandidateGrid make_candidate_grid(const Box &sample_box, std::array<int, 3> shape, int dim,
                                  double pixel_size);

struct LmoChoice {
  std::size_t index = 0;
  Point location = Point::Zero();
  /// <residual, psi(location)>; the linearized loss change per unit weight is twice this.
  double score = 0.0;
};

/// Grid node minimizing <residual, psi(r)>; ties go to the lowest index.
LmoChoice lmo_select(const TiltStack &residual, const DeformationModel &model, const CandidateGrid &grid,
                     const RenderOptions &options = {});

/// argmin over w in [0,1]^n of ||sum_j w_j psi_j - data||^2 with locations
/// and deformation fixed, starting from the current weights.
std::vector<double> solve_weights(const MarkerSet &markers, const DeformationModel &model,
                                  const TiltStack &data, const SolverConfig &config = {});

/// Drops markers with weight < threshold; survivors keep their order.
MarkerSet prune(const MarkerSet &markers, double threshold);

/// Local quasi-Newton fit of the deformation coefficients, warm-started at `model`.
DeformationModel fit_deformation(const MarkerSet &markers, const DeformationModel &model,
                                 const TiltStack &data, const SolverConfig &config = {});

/// Joint local refinement of all marker locations inside `box`.
MarkerSet refine_support(const MarkerSet &markers, const DeformationModel &model, const TiltStack &data,
                         const Box &box, const SolverConfig &config = {});

/// Box used by refine_support for a given configuration and geometry.
Box refinement_box(const SolverConfig &config, const TiltGeometry &geometry);

/// Conditional-gradient marker insertion interleaved with block coordinate
/// descent, on a single resolution level.
SolverState run_sparsealign(const TiltStack &data, const SolverConfig &config, SolverState state);

struct LevelSummary {
  double eta = 1.0;
  int iterations = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  MarkerSet markers;
  DeformationModel model;
};

struct AlignmentResult {
  MarkerSet markers;
  DeformationModel model;
  std::vector<LossRecord> history;
  std::vector<LevelSummary> levels;
  double final_loss = 0.0;
};

/// Solves each schedule level on anti-aliased downsampled data, warm-starting
/// from the previous level, then applies a final prune.
AlignmentResult run_coarse_to_fine(const TiltStack &data_full, const ResolutionSchedule &schedule,
                                   const SolverConfig &config, const DeformationModel &initial_model);

}  // namespace sparsealign
