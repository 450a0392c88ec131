#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparsealign/deformation.hpp"
#include "sparsealign/multires.hpp"
#include "sparsealign/simulate.hpp"
#include "sparsealign/solver.hpp"

namespace sparsealign {

struct PhantomConfig {
  /// "2d", "3d_quadratic" or "3d_cubic".
  std::string preset = "2d";
  /// Overrides of the preset; unset keeps the preset value.
  std::optional<int> marker_count;
  std::optional<double> shape_sigma;
};

struct GeometryConfig {
  /// Detector pixels per axis; 0 keeps the preset (64).
  int detector_pixels = 0;
  /// 0 keeps the preset (20 in 2D, 140 in 3D).
  int n_angles = 0;
  /// Explicit angles, used for MRC input.
  std::vector<double> angles_deg;
  std::vector<double> times;
  std::optional<double> shape_sigma;
  int tilt_axis = kY;
  /// When set, MRC input is preprocessed in experimental mode.
  std::optional<double> bead_intensity;
};

struct NoiseConfig {
  /// "none", "gaussian" or "poisson".
  std::string model = "none";
  double variance = 0.0;
  CountModel counts;
};

struct DeformationConfig {
  int spatial_degree = 2;
  int temporal_degree = 1;
  /// Unset keeps the phantom preset's normalization.
  std::optional<Point> coordinate_scale;
};

struct ScheduleConfig {
  std::vector<double> etas{1.0};
};

struct OutputConfig {
  std::string directory = ".";
};

/// Run configuration document. Every section is optional; unknown keys
/// are rejected with a ConfigError naming the offending path.
struct RunConfig {
  std::uint64_t seed = 0;
  PhantomConfig phantom;
  GeometryConfig geometry;
  NoiseConfig noise;
  SolverConfig solver;
  /// True when solver.sample_box was given explicitly.
  bool has_sample_box = false;
  DeformationConfig deformation;
  ScheduleConfig schedule;
  OutputConfig output;
};

RunConfig parse_run_config(std::string_view text, std::string_view source = "config");
RunConfig load_run_config(const std::filesystem::path &path);

/// Phantom preset with the configured overrides and seed.
PhantomSpec make_phantom_spec(const RunConfig &config);
/// Simulation geometry for the configured phantom.
TiltGeometry make_simulation_geometry(const RunConfig &config, const PhantomSpec &spec);
/// Zero-initialized fitting model with the configured degrees.
DeformationModel make_initial_model(const RunConfig &config, int dim);
/// Solver settings with the sample box resolved (explicit or phantom FoV).
SolverConfig make_solver_config(const RunConfig &config);

}  // namespace sparsealign
