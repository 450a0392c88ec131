#include "sparsealign/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace sparsealign {

Box Box::inflated(double margin, int dim) const {
  Box out = *this;
  for (int a = 0; a < 3; ++a) {
    if (dim == 2 && a == kY) continue;
    out.lower[a] -= margin;
    out.upper[a] += margin;
  }
  return out;
}

void MarkerSet::add(const Point &location, double weight) {
  locations.push_back(location);
  weights.push_back(weight);
}

void MarkerSet::erase(std::size_t index) {
  locations.erase(locations.begin() + static_cast<std::ptrdiff_t>(index));
  weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(index));
}

void MarkerSet::validate(const Box *bounds) const {
  if (dim != 2 && dim != 3) throw DataError("marker set dimension must be 2 or 3");
  if (locations.size() != weights.size()) {
    throw DataError("marker set has " + std::to_string(locations.size()) +
                    " locations but " + std::to_string(weights.size()) + " weights");
  }
  for (std::size_t j = 0; j < size(); ++j) {
    if (!locations[j].allFinite()) {
      throw DataError("marker " + std::to_string(j) + " has a non-finite location");
    }
    if (dim == 2 && locations[j][kY] != 0.0) {
      throw DataError("marker " + std::to_string(j) + " leaves the y = 0 plane of a 2D sample");
    }
    if (!(weights[j] >= 0.0 && weights[j] <= 1.0)) {
      throw DataError("marker " + std::to_string(j) + " weight " +
                      std::to_string(weights[j]) + " outside [0, 1]");
    }
    if (bounds != nullptr && !bounds->contains(locations[j], 1e-12)) {
      throw DataError("marker " + std::to_string(j) + " lies outside the sample box");
    }
  }
}

std::vector<double> to_user_coordinates(const Point &p, int dim) {
  if (dim == 2) return {p[kX], p[kZ]};
  return {p[kX], p[kY], p[kZ]};
}

Point from_user_coordinates(const std::vector<double> &c, int dim) {
  if (static_cast<int>(c.size()) != dim) {
    throw DataError("expected " + std::to_string(dim) + " coordinates, got " +
                    std::to_string(c.size()));
  }
  if (dim == 2) return Point(c[0], 0.0, c[1]);
  return Point(c[0], c[1], c[2]);
}

DetectorGrid DetectorGrid::centered(std::vector<int> shape, double pixel_size) {
  DetectorGrid g;
  g.shape = std::move(shape);
  g.pixel_size = pixel_size;
  g.origin_s = -0.5 * (g.n_s() - 1) * pixel_size;
  g.origin_y = -0.5 * (g.n_y() - 1) * pixel_size;
  return g;
}

std::size_t DetectorGrid::pixel_count() const {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(std::max(e, 0));
  return shape.empty() ? 0 : n;
}

void TiltGeometry::validate() const {
  if (dim != 2 && dim != 3) throw ConfigError("geometry dimension must be 2 or 3");
  if (angles_deg.empty()) throw ConfigError("tilt series needs at least one angle");
  if (times.size() != angles_deg.size()) {
    throw ConfigError("got " + std::to_string(times.size()) + " times for " +
                      std::to_string(angles_deg.size()) + " angles");
  }
  const bool increasing = angles_deg.size() < 2 || angles_deg[1] > angles_deg[0];
  for (std::size_t i = 1; i < angles_deg.size(); ++i) {
    const bool ok = increasing ? angles_deg[i] > angles_deg[i - 1] : angles_deg[i] < angles_deg[i - 1];
    if (!ok) throw ConfigError("tilt angles must be strictly monotone");
    if (!(times[i] > times[i - 1])) throw ConfigError("tilt times must be strictly increasing");
  }
  for (double t : times)
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("tilt times must lie in [0, 1]");
  if (static_cast<int>(detector.shape.size()) != dim - 1) {
    throw ConfigError("detector of a " + std::to_string(dim) + "D sample needs " +
                      std::to_string(dim - 1) + " axes");
  }
  for (int e : detector.shape)
    if (e <= 0) throw ConfigError("detector extents must be positive");
  if (!(detector.pixel_size > 0.0)) throw ConfigError("pixel size must be positive");
  if (!(shape_sigma > 0.0)) throw ConfigError("shape sigma must be positive");
  if (dim == 3 && tilt_axis != kX && tilt_axis != kY) {
    throw ConfigError("tilt axis must be x or y");
  }
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
  const double inv = 1.0 / eta;
  if (std::abs(inv - std::round(inv)) > 1e-9 * inv) {
    throw ConfigError("1/eta must be a positive integer");
  }
  if (!(antialias_sigma >= 0.0)) throw ConfigError("anti-alias sigma must be >= 0");
}

std::vector<double> TiltGeometry::uniform_times(std::size_t n) {
  std::vector<double> t(n, 0.0);
  for (std::size_t i = 0; i < n && n > 1; ++i)
    t[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return t;
}

std::vector<double> TiltGeometry::half_open_angles(double first_deg, double last_deg,
                                                   std::size_t n) {
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i)
    a[i] = first_deg + (last_deg - first_deg) * static_cast<double>(i) / static_cast<double>(n);
  return a;
}

std::vector<double> TiltGeometry::closed_angles(double first_deg, double last_deg,
                                                std::size_t n) {
  if (n < 2) return std::vector<double>(n, first_deg);
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i)
    a[i] = first_deg +
           (last_deg - first_deg) * static_cast<double>(i) / static_cast<double>(n - 1);
  return a;
}

Eigen::Vector3d projection_direction_s(double angle_deg, int tilt_axis) {
  const double th = angle_deg * std::numbers::pi / 180.0;
  Eigen::Vector3d a = Eigen::Vector3d::Zero();
  a[tilt_axis == kX ? kY : kX] = std::cos(th);
  a[kZ] = std::sin(th);
  return a;
}

DetectorPoint project_point(const Point &r, double angle_deg, int tilt_axis) {
  return {projection_direction_s(angle_deg, tilt_axis).dot(r), r[tilt_axis]};
}

TiltStack::TiltStack(TiltGeometry g) : geometry(std::move(g)) {
  values.assign(frame_count() * frame_size(), 0.0);
}

std::span<double> TiltStack::frame(std::size_t t) {
  return {values.data() + t * frame_size(), frame_size()};
}

std::span<const double> TiltStack::frame(std::size_t t) const {
  return {values.data() + t * frame_size(), frame_size()};
}

double TiltStack::squared_norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s;
}

void TiltStack::validate() const {
  geometry.validate();
  if (values.size() != frame_count() * frame_size()) {
    throw DataError("tilt stack holds " + std::to_string(values.size()) + " samples, geometry needs " +
                    std::to_string(frame_count() * frame_size()));
  }
}

}  // namespace sparsealign
