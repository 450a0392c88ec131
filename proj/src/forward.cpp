#include "sparsealign/forward.hpp"

#include <algorithm>
#include <cmath>

namespace sparsealign {

namespace {

Profile gaussian_profile(double center, double origin, double pixel, int n, double sigma,
                         double truncation) {
  Profile p;
  const double half = truncation * sigma;
  const int lo = std::max(0, static_cast<int>(std::ceil((center - half - origin) / pixel)));
  const int hi = std::min(n - 1, static_cast<int>(std::floor((center + half - origin) / pixel)));
  if (hi < lo) return p;
  p.first = lo;
  p.values.resize(static_cast<std::size_t>(hi - lo + 1));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int i = lo; i <= hi; ++i) {
    const double d = origin + i * pixel - center;
    p.values[static_cast<std::size_t>(i - lo)] = std::exp(-d * d * inv);
  }
  return p;
}

Profile unit_profile() { return Profile{0, {1.0}}; }

double profile_overlap(const Profile &a, const Profile &b) {
  const int lo = std::max(a.first, b.first);
  const int hi = std::min(a.last(), b.last());
  double s = 0.0;
  for (int i = lo; i < hi; ++i)
    s += a.values[static_cast<std::size_t>(i - a.first)] * b.values[static_cast<std::size_t>(i - b.first)];
  return s;
}

/// sum_{j,i} frame[j][i] * ys[j] * ss[i] over the footprint window.
double separable_dot(const std::vector<double> &ss, int s0, const std::vector<double> &ys, int y0,
                     std::span<const double> frame, int n_s) {
  double total = 0.0;
  for (std::size_t j = 0; j < ys.size(); ++j) {
    const double *row = frame.data() + static_cast<std::size_t>(y0 + static_cast<int>(j)) * n_s + s0;
    double acc = 0.0;
    for (std::size_t i = 0; i < ss.size(); ++i) acc += row[i] * ss[i];
    total += ys[j] * acc;
  }
  return total;
}

struct FrameMarker {
  DetectorPoint q;
  Footprint footprint;
};

Point deformed(const Point &r, const DeformationModel &model, double t) {
  return model.is_zero() ? r : Point(r + model.displacement(r, t));
}

}  // namespace

double effective_sigma(const TiltGeometry &geometry, SigmaMode mode) {
  if (mode == SigmaMode::kFixed) return geometry.shape_sigma;
  return std::hypot(geometry.shape_sigma, geometry.antialias_sigma);
}

std::vector<DetectorPoint> projected_locations(const MarkerSet &markers,
                                               const DeformationModel &model,
                                               const TiltGeometry &geometry, std::size_t frame) {
  const double t = geometry.times.at(frame);
  const double angle = geometry.angles_deg.at(frame);
  std::vector<DetectorPoint> out;
  out.reserve(markers.size());
  for (const Point &r : markers.locations)
    out.push_back(project_point(deformed(r, model, t), angle, geometry.tilt_axis));
  return out;
}

Footprint marker_footprint(const DetectorPoint &q, const DetectorGrid &grid, int dim, double sigma,
                           double truncation) {
  Footprint f;
  f.s = gaussian_profile(q.s, grid.origin_s, grid.pixel_size, grid.n_s(), sigma, truncation);
  f.y = dim == 2 ? unit_profile()
                 : gaussian_profile(q.y, grid.origin_y, grid.pixel_size, grid.n_y(), sigma, truncation);
  return f;
}

double footprint_dot(const Footprint &f, std::span<const double> frame, const DetectorGrid &grid) {
  if (f.empty()) return 0.0;
  return separable_dot(f.s.values, f.s.first, f.y.values, f.y.first, frame, grid.n_s());
}

double footprint_overlap(const Footprint &a, const Footprint &b) {
  if (a.empty() || b.empty()) return 0.0;
  const double sy = profile_overlap(a.y, b.y);
  return sy == 0.0 ? 0.0 : sy * profile_overlap(a.s, b.s);
}

void footprint_accumulate(const Footprint &f, double weight, std::span<double> frame,
                          const DetectorGrid &grid) {
  if (f.empty() || weight == 0.0) return;
  const int n_s = grid.n_s();
  for (std::size_t j = 0; j < f.y.values.size(); ++j) {
    double *row = frame.data() + static_cast<std::size_t>(f.y.first + static_cast<int>(j)) * n_s + f.s.first;
    const double wy = weight * f.y.values[j];
    for (std::size_t i = 0; i < f.s.values.size(); ++i) row[i] += wy * f.s.values[i];
  }
}

TiltStack render_stack(const MarkerSet &markers, const DeformationModel &model,
                       const TiltGeometry &geometry, const RenderOptions &options) {
  geometry.validate();
  TiltStack out(geometry);
  const double sigma = effective_sigma(geometry, options.sigma_mode);
  for (std::size_t t = 0; t < geometry.frame_count(); ++t) {
    const auto q = projected_locations(markers, model, geometry, t);
    auto frame = out.frame(t);
    for (std::size_t j = 0; j < markers.size(); ++j) {
      footprint_accumulate(marker_footprint(q[j], geometry.detector, geometry.dim, sigma, options.truncation),
                           markers.weights[j], frame, geometry.detector);
    }
  }
  return out;
}

TiltStack residual_stack(const MarkerSet &markers, const DeformationModel &model,
                         const TiltStack &data, const RenderOptions &options) {
  data.validate();
  TiltStack out = render_stack(markers, model, data.geometry, options);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= data.values[i];
  return out;
}

double image_loss(const MarkerSet &markers, const DeformationModel &model, const TiltStack &data,
                  const RenderOptions &options, const GradientBlocks &blocks, LossGradient *gradient) {
  const TiltGeometry &g = data.geometry;
  const double sigma = effective_sigma(g, options.sigma_mode);
  const double inv_var = 1.0 / (sigma * sigma);
  const std::size_t m = markers.size();
  const int n_s = g.detector.n_s();
  const bool want_grad = gradient != nullptr && (blocks.locations || blocks.weights || blocks.deformation);
  const bool want_geometric = want_grad && (blocks.locations || blocks.deformation);

  if (want_grad) {
    gradient->locations.assign(blocks.locations ? m : 0, Point::Zero());
    gradient->weights = Eigen::VectorXd::Zero(blocks.weights ? static_cast<Eigen::Index>(m) : 0);
    gradient->deformation =
        Eigen::VectorXd::Zero(blocks.deformation ? model.parameter_count() : 0);
  }

  std::vector<double> rho(data.frame_size());
  std::vector<FrameMarker> fm(m);
  std::vector<double> ds, dy;
  double loss = 0.0;

  for (std::size_t t = 0; t < g.frame_count(); ++t) {
    const double time = g.times[t];
    const auto measured = data.frame(t);
    std::fill(rho.begin(), rho.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const Point r = deformed(markers.locations[j], model, time);
      fm[j].q = project_point(r, g.angles_deg[t], g.tilt_axis);
      fm[j].footprint = marker_footprint(fm[j].q, g.detector, g.dim, sigma, options.truncation);
      footprint_accumulate(fm[j].footprint, markers.weights[j], rho, g.detector);
    }
    double frame_loss = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
      rho[i] -= measured[i];
      frame_loss += rho[i] * rho[i];
    }
    loss += frame_loss;
    if (!want_grad) continue;

    const Eigen::Vector3d a_s = projection_direction_s(g.angles_deg[t], g.tilt_axis);
    for (std::size_t j = 0; j < m; ++j) {
      const Footprint &f = fm[j].footprint;
      if (f.empty()) continue;
      if (blocks.weights) gradient->weights[static_cast<Eigen::Index>(j)] += 2.0 * footprint_dot(f, rho, g.detector);
      if (!want_geometric) continue;

      // d(footprint)/dq = footprint * (c - q) / sigma^2 along each axis.
      ds.resize(f.s.values.size());
      for (std::size_t i = 0; i < ds.size(); ++i)
        ds[i] = f.s.values[i] * (g.detector.s_center(f.s.first + static_cast<int>(i)) - fm[j].q.s) * inv_var;
      const double w2 = 2.0 * markers.weights[j];
      const double dl_ds = w2 * separable_dot(ds, f.s.first, f.y.values, f.y.first, rho, n_s);
      double dl_dy = 0.0;
      if (g.dim == 3) {
        dy.resize(f.y.values.size());
        for (std::size_t k = 0; k < dy.size(); ++k)
          dy[k] = f.y.values[k] * (g.detector.y_center(f.y.first + static_cast<int>(k)) - fm[j].q.y) * inv_var;
        dl_dy = w2 * separable_dot(f.s.values, f.s.first, dy, f.y.first, rho, n_s);
      }
      // dL/d(deformed point) = A^T dL/dq
      Eigen::Vector3d dl_dpoint = dl_ds * a_s;
      if (g.dim == 3) dl_dpoint[g.tilt_axis] += dl_dy;

      if (model.is_zero() && !blocks.deformation) {
        if (blocks.locations) gradient->locations[j] += dl_dpoint;
        continue;
      }
      const DeformationJacobians jac = model.jacobians(markers.locations[j], time);
      if (blocks.locations)
        gradient->locations[j] += dl_dpoint + jac.wrt_location.transpose() * dl_dpoint;
      if (blocks.deformation) gradient->deformation += jac.wrt_parameters.transpose() * dl_dpoint;
    }
  }
  if (want_grad && blocks.locations && g.dim == 2) {
    for (Point &p : gradient->locations) p[kY] = 0.0;
  }
  return loss;
}

double unit_response_inner_product(const Point &r, const DeformationModel &model,
                                   const TiltStack &stack, const RenderOptions &options) {
  const TiltGeometry &g = stack.geometry;
  const double sigma = effective_sigma(g, options.sigma_mode);
  double total = 0.0;
  for (std::size_t t = 0; t < g.frame_count(); ++t) {
    const DetectorPoint q = project_point(deformed(r, model, g.times[t]), g.angles_deg[t], g.tilt_axis);
    total += footprint_dot(marker_footprint(q, g.detector, g.dim, sigma, options.truncation),
                           stack.frame(t), g.detector);
  }
  return total;
}

}  // namespace sparsealign
