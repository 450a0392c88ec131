#pragma once

#include <cstdint>
#include <span>
#include <variant>

#include "sparsealign/deformation.hpp"
#include "sparsealign/geometry.hpp"
#include "sparsealign/types.hpp"

namespace sparsealign {

struct PhantomSpec {
  int dim = 2;
  /// Field of view used for evaluation grids.
  Box fov;
  /// Markers are drawn uniformly from this region.
  Box marker_region;
  int marker_count = 10;
  double shape_sigma = 0.02;
  /// Minimum pairwise marker distance in units of shape_sigma.
  double min_separation_sigmas = 3.0;
  DeformationModel ground_truth;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Illustrative 2D sample: L = 1, FoV [-L/2, L/2]^2, 10 markers in
/// [-2L/5, 2L/5] x [-L/10, L/10] and the quadratic z-doming
/// D_z = (-x - z - x^2 - z^2 - xz) t.
PhantomSpec phantom_spec_2d(std::uint64_t seed);

enum class Doming3d { kQuadratic, kCubic };

/// 3D slab of 819.2 x 819.2 x 100 nm with 20 markers (shape sigma 15 nm).
/// Coordinates are normalized by the 409.6 nm half-width before the
/// polynomial is applied: quadratic D_z = (200 - 100 x^2 - 100 y^2) t,
/// cubic D_z = (200 - 50 x^2 - 50 y^2 + 25 x y^2 + 25 x^2 y) t.
PhantomSpec phantom_spec_3d(std::uint64_t seed, Doming3d doming = Doming3d::kQuadratic);

/// 2D detector of n_d pixels over the FoV width, angles over [-70, 70).
TiltGeometry geometry_2d(const PhantomSpec &spec, int n_d = 64, int n_angles = 20);
/// 3D detector of n x n pixels over the FoV, angles over [-70, 70] with
/// t_i = i / (n_angles - 1).
TiltGeometry geometry_3d(const PhantomSpec &spec, int n_pixels = 64, int n_angles = 140);

struct Phantom {
  MarkerSet markers;
  DeformationModel model;
};

/// Seeded uniform placement with a minimum separation; throws ConfigError
/// when the region cannot hold the requested markers.
Phantom make_phantom(const PhantomSpec &spec);

/// Electron-count model I = I0 exp(-V_abs C diameter intensity).
struct CountModel {
  double incident_counts = 64.0;
  double absorption_potential = 5.39;      // V
  double interaction_constant = 0.00653;   // 1 / (V nm)
  double bead_diameter = 15.0;             // nm

  void validate() const;
};

TiltStack scale_to_counts(const TiltStack &stack, const CountModel &counts);

struct GaussianNoise {
  double variance = 0.0;
};
struct PoissonNoise {};
using NoiseModel = std::variant<GaussianNoise, PoissonNoise>;

/// Seeded, reproducible noise. Poisson mode draws counts with lambda equal to
/// each pixel and rejects negative input with a DataError.
TiltStack add_noise(const TiltStack &stack, const NoiseModel &noise, std::uint64_t seed);

/// x -> 2 sqrt(x + 3/8)
double anscombe(double x);

/// Threshold maximizing the between-class variance of a 256-bin histogram
/// spanning [min, max]. The returned value is the upper edge of the last
/// bin of the lower class; ties go to the lower threshold. Throws
/// DataError for a constant image.
double otsu_threshold(std::span<const double> values);

struct SimulatedPreprocess {
  /// Noiseless stack used for the Otsu bead mask.
  const TiltStack *reference = nullptr;
};
struct ExperimentalPreprocess {
  /// Mean bead intensity of the Anscombe-transformed, mean-subtracted data.
  double bead_intensity = 1.0;
};
using PreprocessMode = std::variant<SimulatedPreprocess, ExperimentalPreprocess>;

/// Maps counts to forward-model units (background near 0, beads near +1).
/// Simulated: shift by -min, Anscombe, subtract the mean background and
/// divide by the mean bead offset, both from the Otsu mask of the reference.
/// Experimental: Anscombe, subtract the stack mean, divide by the supplied
/// bead intensity.
TiltStack preprocess_counts(const TiltStack &counts, const PreprocessMode &mode);

}  // namespace sparsealign
