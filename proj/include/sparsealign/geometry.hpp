#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sparsealign/types.hpp"

namespace sparsealign {

/// Regular detector sampling grid. `shape` lists extents slowest-first:
/// {n_s} for 2D samples, {n_y, n_s} for 3D samples (rows follow the tilt
/// axis, columns the projected in-plane coordinate s).
struct DetectorGrid {
  std::vector<int> shape;
  double pixel_size = 1.0;
  /// Coordinates of the centre of pixel 0 along s and along the tilt axis.
  double origin_s = 0.0;
  double origin_y = 0.0;

  /// Grid of `shape` centred on the optical axis.
  static DetectorGrid centered(std::vector<int> shape, double pixel_size);

  int n_s() const { return shape.back(); }
  int n_y() const { return shape.size() == 2 ? shape.front() : 1; }
  std::size_t pixel_count() const;
  double s_center(int i) const { return origin_s + i * pixel_size; }
  double y_center(int j) const { return origin_y + j * pixel_size; }
};

/// Coordinates of a projected marker on the detector: s along the detector
/// row and y along the tilt axis (unused for 2D samples).
struct DetectorPoint {
  double s = 0.0;
  double y = 0.0;
};

/// Parallel-beam single-axis tilt series.
struct TiltGeometry {
  int dim = 2;
  std::vector<double> angles_deg;
  /// Acquisition times in [0, 1], one per tilt.
  std::vector<double> times;
  DetectorGrid detector;
  /// Standard deviation of the projected Gaussian marker profile.
  double shape_sigma = 1.0;
  /// Axis the stage rotates about (3D only; x or y).
  int tilt_axis = kY;
  /// Resolution relative to full resolution; 1/eta is a positive integer.
  double eta = 1.0;
  /// Accumulated std of anti-aliasing filters applied to the data.
  double antialias_sigma = 0.0;

  std::size_t frame_count() const { return angles_deg.size(); }
  void validate() const;

  /// t_i = i / (n - 1); a single frame gets t = 0.
  static std::vector<double> uniform_times(std::size_t n);
  /// n angles spread uniformly over [first, last) (half-open).
  static std::vector<double> half_open_angles(double first_deg, double last_deg, std::size_t n);
  /// n angles spread uniformly over [first, last] (closed).
  static std::vector<double> closed_angles(double first_deg, double last_deg, std::size_t n);
};

/// Parallel projection of a (deformed) sample point at one tilt angle:
/// s = u cos(theta) + z sin(theta), where u is the in-plane axis orthogonal
/// to the tilt axis; the second detector coordinate is the tilt-axis value.
DetectorPoint project_point(const Point &r, double angle_deg, int tilt_axis);

/// Row of the projection matrix A_theta for s; y uses the unit vector of the
/// tilt axis.
Eigen::Vector3d projection_direction_s(double angle_deg, int tilt_axis);

/// Measured or rendered projection data: frame-major, row-major within frame.
struct TiltStack {
  TiltGeometry geometry;
  std::vector<double> values;

  TiltStack() = default;
  explicit TiltStack(TiltGeometry g);

  std::size_t frame_count() const { return geometry.frame_count(); }
  std::size_t frame_size() const { return geometry.detector.pixel_count(); }
  std::span<double> frame(std::size_t t);
  std::span<const double> frame(std::size_t t) const;
  double squared_norm() const;
  /// Throws DataError unless values.size() matches the geometry.
  void validate() const;
};

}  // namespace sparsealign
