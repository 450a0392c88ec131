#include "sparsealign/multires.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sparsealign {

namespace {

int reflect_index(int i, int n) {
  const int period = 2 * n;
  int k = i % period;
  if (k < 0) k += period;
  return k < n ? k : period - 1 - k;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double &v : k) v /= sum;
  return k;
}

/// Filters `count` lines of length n spaced `stride` apart, elements `step` apart.
void filter_lines(std::vector<double> &data, int n, int count, int line_stride, int step,
                  const std::vector<double> &kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> line(static_cast<std::size_t>(n));
  for (int l = 0; l < count; ++l) {
    const int base = l * line_stride;
    for (int i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = data[static_cast<std::size_t>(base + i * step)];
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<std::size_t>(k + radius)] * line[static_cast<std::size_t>(reflect_index(i + k, n))];
      data[static_cast<std::size_t>(base + i * step)] = acc;
    }
  }
}

}  // namespace

int decimation_factor(double eta_in, double eta_out) {
  if (!(eta_out > 0.0) || !(eta_in > 0.0)) throw ConfigError("downsampling factors must be positive");
  const double ratio = eta_in / eta_out;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio) {
    std::ostringstream os;
    os << "cannot downsample from eta=" << eta_in << " to eta=" << eta_out
       << ": decimation factor " << ratio << " is not a positive integer";
    throw ConfigError(os.str());
  }
  return static_cast<int>(rounded);
}

TiltGeometry downsample_geometry(const TiltGeometry &geometry, double eta) {
  const int f = decimation_factor(geometry.eta, eta);
  TiltGeometry out = geometry;
  if (f == 1) return out;
  for (int &e : out.detector.shape) e = (e + f - 1) / f;
  out.detector.pixel_size = geometry.detector.pixel_size * f;
  out.eta = eta;
  const double tau = kAntialiasSigmaPerFactor * f * geometry.detector.pixel_size;
  out.antialias_sigma = std::hypot(geometry.antialias_sigma, tau);
  return out;
}

TiltStack downsample_stack(const TiltStack &stack, double eta) {
  stack.validate();
  const int f = decimation_factor(stack.geometry.eta, eta);
  if (f == 1) return stack;

  const TiltGeometry &g = stack.geometry;
  const auto kernel = gaussian_kernel(kAntialiasSigmaPerFactor * f);
  const int n_s = g.detector.n_s();
  const int n_y = g.detector.n_y();

  TiltStack out(downsample_geometry(g, eta));
  const int out_s = out.geometry.detector.n_s();
  const int out_y = out.geometry.detector.n_y();
  std::vector<double> work(stack.frame_size());
  for (std::size_t t = 0; t < stack.frame_count(); ++t) {
    const auto in = stack.frame(t);
    std::copy(in.begin(), in.end(), work.begin());
    filter_lines(work, n_s, n_y, n_s, 1, kernel);
    if (g.dim == 3) filter_lines(work, n_y, n_s, 1, n_s, kernel);
    auto dst = out.frame(t);
    for (int j = 0; j < out_y; ++j)
      for (int i = 0; i < out_s; ++i)
        dst[static_cast<std::size_t>(j * out_s + i)] =
            work[static_cast<std::size_t>((j * f) * n_s + i * f)];
  }
  return out;
}

void ResolutionSchedule::validate() const {
  if (levels.empty()) throw ConfigError("resolution schedule is empty");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double eta = levels[i].eta;
    decimation_factor(1.0, eta);
    if (eta > 1.0) throw ConfigError("eta must not exceed 1");
    if (i > 0 && !(eta > levels[i - 1].eta)) throw ConfigError("schedule etas must be strictly increasing");
    if (!(levels[i].tolerance > 0.0)) throw ConfigError("level tolerance must be positive");
  }
}

ResolutionSchedule make_resolution_schedule(const std::vector<int> &data_shape,
                                            const std::vector<double> &base_etas, double tolerance) {
  if (data_shape.empty()) throw ConfigError("data shape is empty");
  std::vector<double> etas = base_etas;
  std::sort(etas.begin(), etas.end());
  ResolutionSchedule schedule;
  const int smallest = *std::min_element(data_shape.begin(), data_shape.end());
  for (double eta : etas) {
    const int f = decimation_factor(1.0, eta);
    const int pixels = (smallest + f - 1) / f;
    if (pixels < kMinimumLevelPixels) {
      std::ostringstream os;
      os << "dropped eta=1/" << f << ": " << pixels << " px per axis is below the "
         << kMinimumLevelPixels << " px floor";
      schedule.warnings.push_back(os.str());
      continue;
    }
    schedule.levels.push_back({eta, tolerance});
  }
  if (schedule.levels.empty()) throw ConfigError("no resolution level is feasible for this data shape");
  schedule.validate();
  return schedule;
}

}  // namespace sparsealign
