#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sparsealign {

/// Sample coordinates (x, y, z). Two-dimensional samples live in the y = 0
/// plane, so a 2D location (x, z) is stored as (x, 0, z).
using Point = Eigen::Vector3d;
using AxisMask = std::array<bool, 3>;

enum Axis : int { kX = 0, kY = 1, kZ = 2 };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, flags or parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

struct Box {
  Point lower = Point::Zero();
  Point upper = Point::Zero();

  bool contains(const Point &p, double slack = 0.0) const {
    return (p.array() >= lower.array() - slack).all() &&
           (p.array() <= upper.array() + slack).all();
  }
  Box inflated(double margin, int dim) const;
  Point extent() const { return upper - lower; }
};

/// Point-source measure: marker centres at t = 0 with weights in [0, 1].
struct MarkerSet {
  int dim = 2;
  std::vector<Point> locations;
  std::vector<double> weights;

  std::size_t size() const { return locations.size(); }
  bool empty() const { return locations.empty(); }
  void add(const Point &location, double weight);
  void erase(std::size_t index);

  /// Throws DataError on length mismatch, weights outside [0, 1], non-finite
  /// coordinates or a nonzero y in 2D. With a box, also checks containment.
  void validate(const Box *bounds = nullptr) const;
};

/// Sample coordinates as the user-facing tuple: (x, z) in 2D, (x, y, z) in 3D.
std::vector<double> to_user_coordinates(const Point &p, int dim);
Point from_user_coordinates(const std::vector<double> &c, int dim);

}  // namespace sparsealign
