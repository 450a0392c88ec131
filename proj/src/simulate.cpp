#include "sparsealign/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

namespace sparsealign {

namespace {

constexpr double kSlabHalfWidth = 409.6;  // nm
constexpr double kSlabHalfDepth = 50.0;   // nm

}  // namespace

void PhantomSpec::validate() const {
  if (dim != 2 && dim != 3) throw ConfigError("phantom dimension must be 2 or 3");
  if (marker_count < 1) throw ConfigError("phantom needs at least one marker");
  if (!(shape_sigma > 0.0)) throw ConfigError("phantom shape sigma must be positive");
  if (!fov.contains(marker_region.lower) || !fov.contains(marker_region.upper)) {
    throw ConfigError("marker region must lie inside the field of view");
  }
  if ((marker_region.upper.array() < marker_region.lower.array()).any()) {
    throw ConfigError("marker region is inverted");
  }
  if (ground_truth.dim() != dim) throw ConfigError("ground-truth deformation dimension mismatch");
}

PhantomSpec phantom_spec_2d(std::uint64_t seed) {
  PhantomSpec s;
  s.dim = 2;
  s.fov = {Point(-0.5, 0.0, -0.5), Point(0.5, 0.0, 0.5)};
  s.marker_region = {Point(-0.4, 0.0, -0.1), Point(0.4, 0.0, 0.1)};
  s.marker_count = 10;
  s.shape_sigma = 0.02;
  s.ground_truth = DeformationModel::for_dimension(2, 2);
  const double coeffs[6][3] = {{0, 0, 0}, {1, 0, -1}, {0, 1, -1}, {2, 0, -1}, {0, 2, -1}, {1, 1, -1}};
  for (const auto &c : coeffs) {
    Monomial m;
    m.spatial = {static_cast<int>(c[0]), 0, static_cast<int>(c[1])};
    s.ground_truth.set_coefficient(m, kZ, c[2]);
  }
  s.seed = seed;
  return s;
}

PhantomSpec phantom_spec_3d(std::uint64_t seed, Doming3d doming) {
  PhantomSpec s;
  s.dim = 3;
  s.fov = {Point(-kSlabHalfWidth, -kSlabHalfWidth, -kSlabHalfDepth),
           Point(kSlabHalfWidth, kSlabHalfWidth, kSlabHalfDepth)};
  s.marker_region = s.fov;
  s.marker_count = 20;
  s.shape_sigma = 15.0;
  const Point scale = Point::Constant(kSlabHalfWidth);
  auto set = [&](int ex, int ey, double v) {
    Monomial m;
    m.spatial = {ex, ey, 0};
    s.ground_truth.set_coefficient(m, kZ, v);
  };
  if (doming == Doming3d::kQuadratic) {
    s.ground_truth = DeformationModel::for_dimension(3, 2, 1, scale);
    set(0, 0, 200.0);
    set(2, 0, -100.0);
    set(0, 2, -100.0);
  } else {
    s.ground_truth = DeformationModel::for_dimension(3, 3, 1, scale);
    set(0, 0, 200.0);
    set(2, 0, -50.0);
    set(0, 2, -50.0);
    set(1, 2, 25.0);
    set(2, 1, 25.0);
  }
  s.seed = seed;
  return s;
}

TiltGeometry geometry_2d(const PhantomSpec &spec, int n_d, int n_angles) {
  TiltGeometry g;
  g.dim = 2;
  g.angles_deg = TiltGeometry::half_open_angles(-70.0, 70.0, static_cast<std::size_t>(n_angles));
  g.times = TiltGeometry::uniform_times(static_cast<std::size_t>(n_angles));
  const double width = spec.fov.upper[kX] - spec.fov.lower[kX];
  g.detector = DetectorGrid::centered({n_d}, width / n_d);
  g.shape_sigma = spec.shape_sigma;
  g.validate();
  return g;
}

TiltGeometry geometry_3d(const PhantomSpec &spec, int n_pixels, int n_angles) {
  TiltGeometry g;
  g.dim = 3;
  g.angles_deg = TiltGeometry::closed_angles(-70.0, 70.0, static_cast<std::size_t>(n_angles));
  g.times = TiltGeometry::uniform_times(static_cast<std::size_t>(n_angles));
  const double width = spec.fov.upper[kX] - spec.fov.lower[kX];
  g.detector = DetectorGrid::centered({n_pixels, n_pixels}, width / n_pixels);
  g.shape_sigma = spec.shape_sigma;
  g.tilt_axis = kY;
  g.validate();
  return g;
}

Phantom make_phantom(const PhantomSpec &spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double min_sep = spec.min_separation_sigmas * spec.shape_sigma;
  const int budget = 10000 * spec.marker_count;

  Phantom p;
  p.markers.dim = spec.dim;
  p.model = spec.ground_truth;
  int attempts = 0;
  while (static_cast<int>(p.markers.size()) < spec.marker_count) {
    if (++attempts > budget) {
      std::ostringstream os;
      os << "marker region too small to place " << spec.marker_count << " markers " << min_sep
         << " apart (placed " << p.markers.size() << ")";
      throw ConfigError(os.str());
    }
    Point r;
    for (int a = 0; a < 3; ++a) {
      const double u = unit(rng);
      r[a] = spec.marker_region.lower[a] + u * (spec.marker_region.upper[a] - spec.marker_region.lower[a]);
    }
    if (spec.dim == 2) r[kY] = 0.0;
    const bool clear = std::all_of(p.markers.locations.begin(), p.markers.locations.end(),
                                   [&](const Point &o) { return (o - r).norm() >= min_sep; });
    if (clear) p.markers.add(r, 1.0);
  }
  return p;
}

void CountModel::validate() const {
  if (!(incident_counts > 0.0 && absorption_potential > 0.0 && interaction_constant > 0.0 && bead_diameter > 0.0)) {
    throw ConfigError("count model parameters must all be positive");
  }
}

TiltStack scale_to_counts(const TiltStack &stack, const CountModel &counts) {
  counts.validate();
  const double k = counts.absorption_potential * counts.interaction_constant * counts.bead_diameter;
  TiltStack out = stack;
  for (double &v : out.values) v = counts.incident_counts * std::exp(-k * v);
  return out;
}

TiltStack add_noise(const TiltStack &stack, const NoiseModel &noise, std::uint64_t seed) {
  TiltStack out = stack;
  std::mt19937_64 rng(seed);
  if (const auto *g = std::get_if<GaussianNoise>(&noise)) {
    if (!(g->variance >= 0.0)) throw ConfigError("noise variance must be >= 0");
    if (g->variance == 0.0) return out;
    std::normal_distribution<double> normal(0.0, std::sqrt(g->variance));
    for (double &v : out.values) v += normal(rng);
    return out;
  }
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double lambda = out.values[i];
    if (!(lambda >= 0.0)) {
      throw DataError("Poisson noise needs non-negative pixels; pixel " + std::to_string(i) + " is " +
                      std::to_string(lambda));
    }
    if (lambda == 0.0) continue;
    std::poisson_distribution<long long> poisson(lambda);
    out.values[i] = static_cast<double>(poisson(rng));
  }
  return out;
}

double anscombe(double x) { return 2.0 * std::sqrt(x + 0.375); }

double otsu_threshold(std::span<const double> values) {
  if (values.empty()) throw DataError("Otsu threshold of an empty image");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw DataError("Otsu threshold undefined for a constant image");

  constexpr int kBins = 256;
  const double width = (hi - lo) / kBins;
  std::array<double, kBins> hist{};
  for (double v : values) {
    const int b = std::clamp(static_cast<int>((v - lo) / width), 0, kBins - 1);
    hist[static_cast<std::size_t>(b)] += 1.0;
  }
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * hist[static_cast<std::size_t>(b)];

  double w0 = 0.0;
  double sum0 = 0.0;
  double best = -1.0;
  int best_k = 0;
  for (int k = 0; k < kBins - 1; ++k) {
    w0 += hist[static_cast<std::size_t>(k)];
    sum0 += k * hist[static_cast<std::size_t>(k)];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_k = k;
    }
  }
  return lo + (best_k + 1) * width;
}

TiltStack preprocess_counts(const TiltStack &counts, const PreprocessMode &mode) {
  counts.validate();
  TiltStack out = counts;
  if (const auto *exp = std::get_if<ExperimentalPreprocess>(&mode)) {
    if (!(exp->bead_intensity != 0.0) || !std::isfinite(exp->bead_intensity)) {
      throw ConfigError("bead intensity must be finite and nonzero");
    }
    double mean = 0.0;
    for (double &v : out.values) {
      if (v < -0.375) throw DataError("counts below -3/8 cannot be Anscombe-transformed");
      v = anscombe(v);
      mean += v;
    }
    mean /= static_cast<double>(out.values.size());
    for (double &v : out.values) v = (v - mean) / exp->bead_intensity;
    return out;
  }

  const TiltStack *reference = std::get<SimulatedPreprocess>(mode).reference;
  if (reference == nullptr) throw ConfigError("simulated preprocessing needs a reference stack");
  if (reference->values.size() != counts.values.size()) throw DataError("reference stack shape mismatch");

  const double threshold = otsu_threshold(reference->values);
  std::size_t above = 0;
  for (double v : reference->values) above += v >= threshold ? 1 : 0;
  // Beads are the minority class of the reference.
  const bool beads_above = 2 * above < reference->values.size();

  const double shift = *std::min_element(out.values.begin(), out.values.end());
  double bead_sum = 0.0, bg_sum = 0.0;
  std::size_t bead_n = 0, bg_n = 0;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = anscombe(out.values[i] - shift);
    const bool bead = (reference->values[i] >= threshold) == beads_above;
    if (bead) {
      bead_sum += out.values[i];
      ++bead_n;
    } else {
      bg_sum += out.values[i];
      ++bg_n;
    }
  }
  if (bead_n == 0 || bg_n == 0) throw DataError("Otsu mask of the reference stack is empty");
  const double background = bg_sum / static_cast<double>(bg_n);
  const double bead = bead_sum / static_cast<double>(bead_n) - background;
  if (bead == 0.0) throw DataError("bead and background intensities coincide");
  for (double &v : out.values) v = (v - background) / bead;
  return out;
}

}  // namespace sparsealign
