#include "sparsealign/baseline.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "sparsealign/forward.hpp"

namespace sparsealign {

MarkerTraces::MarkerTraces(int dim_, std::size_t frames_, std::size_t markers_)
    : dim(dim_), frames(frames_), markers(markers_), points(frames_ * markers_), valid(frames_ * markers_, 1) {}

std::size_t MarkerTraces::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid) n += v != 0 ? 1 : 0;
  return n;
}

MarkerTraces generate_traces(const MarkerSet &markers, const DeformationModel &model, const TiltGeometry &geometry) {
  geometry.validate();
  MarkerTraces traces(geometry.dim, geometry.frame_count(), markers.size());
  for (std::size_t t = 0; t < geometry.frame_count(); ++t) {
    const auto q = projected_locations(markers, model, geometry, t);
    for (std::size_t j = 0; j < markers.size(); ++j) traces.at(t, j) = q[j];
  }
  return traces;
}

double trace_loss(const MarkerTraces &traces, const MarkerSet &markers, const DeformationModel &model,
                  const TiltGeometry &geometry, std::vector<Point> *location_gradient,
                  Eigen::VectorXd *deformation_gradient) {
  if (traces.markers != markers.size() || traces.frames != geometry.frame_count()) {
    throw DataError("trace table does not match the marker set or geometry");
  }
  if (location_gradient != nullptr) location_gradient->assign(markers.size(), Point::Zero());
  if (deformation_gradient != nullptr) *deformation_gradient = Eigen::VectorXd::Zero(model.parameter_count());
  const bool want_grad = location_gradient != nullptr || deformation_gradient != nullptr;

  double loss = 0.0;
  for (std::size_t t = 0; t < traces.frames; ++t) {
    const double time = geometry.times[t];
    const Eigen::Vector3d a_s = projection_direction_s(geometry.angles_deg[t], geometry.tilt_axis);
    for (std::size_t j = 0; j < traces.markers; ++j) {
      if (!traces.is_valid(t, j)) continue;
      const Point &r = markers.locations[j];
      const Point moved = r + model.displacement(r, time);
      const DetectorPoint q = project_point(moved, geometry.angles_deg[t], geometry.tilt_axis);
      const DetectorPoint &obs = traces.at(t, j);
      const double es = obs.s - q.s;
      const double ey = geometry.dim == 3 ? obs.y - q.y : 0.0;
      loss += es * es + ey * ey;
      if (!want_grad) continue;

      Eigen::Vector3d dl_dpoint = -2.0 * es * a_s;
      if (geometry.dim == 3) dl_dpoint[geometry.tilt_axis] += -2.0 * ey;
      const DeformationJacobians jac = model.jacobians(r, time);
      if (location_gradient != nullptr) {
        (*location_gradient)[j] += dl_dpoint + jac.wrt_location.transpose() * dl_dpoint;
        if (geometry.dim == 2) (*location_gradient)[j][kY] = 0.0;
      }
      if (deformation_gradient != nullptr) *deformation_gradient += jac.wrt_parameters.transpose() * dl_dpoint;
    }
  }
  return loss;
}

DomingFit dm_fit(const MarkerTraces &traces, const TiltGeometry &geometry, const DeformationModel &model_template,
                 const DomingFitOptions &options) {
  geometry.validate();
  if (traces.dim != geometry.dim || model_template.dim() != geometry.dim) {
    throw ConfigError("trace, geometry and deformation dimensions differ");
  }
  if (traces.frames != geometry.frame_count()) throw DataError("trace table has the wrong number of tilts");

  const std::vector<int> axes = geometry.dim == 2 ? std::vector<int>{kX, kZ} : std::vector<int>{kX, kY, kZ};
  const auto na = static_cast<Eigen::Index>(axes.size());
  const auto m = static_cast<Eigen::Index>(traces.markers);
  const int np = model_template.parameter_count();
  const Eigen::Index unknowns = na * m + np;
  const auto observations = static_cast<Eigen::Index>(traces.valid_count()) * (geometry.dim - 1);
  if (observations < unknowns) {
    std::ostringstream os;
    os << "doming fit is underdetermined: " << unknowns << " unknowns but only " << observations
       << " observations";
    throw DataError(os.str());
  }

  // Back-project the first valid entry of each trace onto the z = 0 plane.
  MarkerSet markers;
  markers.dim = geometry.dim;
  const int u_axis = geometry.tilt_axis == kX ? kY : kX;
  for (std::size_t j = 0; j < traces.markers; ++j) {
    std::size_t t0 = traces.frames;
    for (std::size_t t = 0; t < traces.frames; ++t)
      if (traces.is_valid(t, j)) {
        t0 = t;
        break;
      }
    if (t0 == traces.frames) throw DataError("marker " + std::to_string(j) + " has no valid trace entry");
    Point r = Point::Zero();
    const double c = std::cos(geometry.angles_deg[t0] * M_PI / 180.0);
    r[u_axis] = traces.at(t0, j).s / c;
    if (geometry.dim == 3) r[geometry.tilt_axis] = traces.at(t0, j).y;
    markers.add(r.cwiseMax(options.location_box.lower).cwiseMin(options.location_box.upper), 1.0);
  }

  Eigen::VectorXd x0(unknowns), lo(unknowns), hi(unknowns);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index a = 0; a < na; ++a) {
      const int axis = axes[static_cast<std::size_t>(a)];
      x0[j * na + a] = markers.locations[static_cast<std::size_t>(j)][axis];
      lo[j * na + a] = options.location_box.lower[axis];
      hi[j * na + a] = options.location_box.upper[axis];
    }
  x0.tail(np).setZero();
  lo.tail(np).setConstant(-options.deformation_bound);
  hi.tail(np).setConstant(options.deformation_bound);

  DeformationModel model = model_template.zeroed();
  std::vector<Point> loc_grad;
  Eigen::VectorXd def_grad;
  auto unpack = [&](const Eigen::VectorXd &x) {
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index a = 0; a < na; ++a)
        markers.locations[static_cast<std::size_t>(j)][axes[static_cast<std::size_t>(a)]] = x[j * na + a];
    model.set_parameters(x.tail(np));
  };
  Objective objective = [&](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
    unpack(x);
    const double f = trace_loss(traces, markers, model, geometry, &loc_grad, &def_grad);
    g.resize(unknowns);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index a = 0; a < na; ++a)
        g[j * na + a] = loc_grad[static_cast<std::size_t>(j)][axes[static_cast<std::size_t>(a)]];
    g.tail(np) = def_grad;
    return f;
  };
  const auto res = minimize_bounded_lbfgs(objective, x0, lo, hi, options.optimizer);
  unpack(res.x);
  return {markers, model, res.value, res.iterations, res.status};
}

}  // namespace sparsealign
