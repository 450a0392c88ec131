#include "sparsealign/config.hpp"

#include <algorithm>
#include <initializer_list>
#include <set>

#include "json.hpp"
#include "sparsealign/io.hpp"

namespace sparsealign {

namespace {

using nlohmann::json;

/// Typed access to one JSON object that rejects keys it was not told about.
class Section {
 public:
  Section(const json &j, std::string path, std::initializer_list<const char *> allowed)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto &item : j_.items()) {
      if (!ok.count(item.key())) throw ConfigError("unknown key \"" + key(item.key()) + "\"");
    }
  }

  bool has(const char *k) const { return j_.contains(k); }
  const json &raw(const char *k) const { return j_.at(k); }
  std::string key(const std::string &k) const { return path_.empty() ? k : path_ + "." + k; }

  template <class T>
  void read(const char *k, T &out) const {
    if (!has(k)) return;
    out = get<T>(k);
  }
  template <class T>
  void read(const char *k, std::optional<T> &out) const {
    if (!has(k)) return;
    out = get<T>(k);
  }
  template <class T>
  T get(const char *k) const {
    const json &v = j_.at(k);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception &) {
      throw ConfigError("\"" + key(k) + "\" has the wrong type (" + std::string(v.type_name()) + ")");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "configuration" : "\"" + path_ + "\""; }
  const json &j_;
  std::string path_;
};

Point read_point(const Section &s, const char *k, int dim) {
  const auto v = s.get<std::vector<double>>(k);
  if (static_cast<int>(v.size()) != dim) {
    throw ConfigError("\"" + s.key(k) + "\" needs " + std::to_string(dim) + " coordinates");
  }
  return from_user_coordinates(v, dim);
}

void read_optimizer(const Section &parent, const char *k, BoundedLbfgsOptions &o) {
  if (!parent.has(k)) return;
  const Section s(parent.raw(k), parent.key(k),
                  {"memory", "max_iterations", "max_evaluations", "ftol", "pgtol", "max_backtracks"});
  s.read("memory", o.memory);
  s.read("max_iterations", o.max_iterations);
  s.read("max_evaluations", o.max_evaluations);
  s.read("ftol", o.ftol);
  s.read("pgtol", o.pgtol);
  s.read("max_backtracks", o.max_backtracks);
  if (o.memory < 1 || o.max_iterations < 1 || o.max_evaluations < 1 || o.max_backtracks < 1 || o.ftol < 0.0 ||
      o.pgtol < 0.0) {
    throw ConfigError("\"" + parent.key(k) + "\" has out-of-range values");
  }
}

int phantom_dim(const std::string &preset) { return preset == "2d" ? 2 : 3; }

}  // namespace

RunConfig parse_run_config(std::string_view text, std::string_view source) {
  const json root = json::parse(text, nullptr, false);
  if (root.is_discarded()) throw ConfigError(std::string(source) + ": not valid JSON");
  RunConfig c;
  const Section top(root, "", {"seed", "phantom", "geometry", "noise", "solver", "deformation", "schedule", "output"});
  top.read("seed", c.seed);

  if (top.has("phantom")) {
    const Section s(top.raw("phantom"), "phantom", {"preset", "marker_count", "shape_sigma"});
    s.read("preset", c.phantom.preset);
    s.read("marker_count", c.phantom.marker_count);
    s.read("shape_sigma", c.phantom.shape_sigma);
    const auto &p = c.phantom.preset;
    if (p != "2d" && p != "3d_quadratic" && p != "3d_cubic") {
      throw ConfigError("phantom.preset must be \"2d\", \"3d_quadratic\" or \"3d_cubic\"");
    }
  }
  const int dim = phantom_dim(c.phantom.preset);

  if (top.has("geometry")) {
    const Section s(top.raw("geometry"), "geometry",
                    {"detector_pixels", "n_angles", "angles_deg", "times", "shape_sigma", "tilt_axis",
                     "bead_intensity"});
    s.read("detector_pixels", c.geometry.detector_pixels);
    s.read("n_angles", c.geometry.n_angles);
    s.read("angles_deg", c.geometry.angles_deg);
    s.read("times", c.geometry.times);
    s.read("shape_sigma", c.geometry.shape_sigma);
    s.read("bead_intensity", c.geometry.bead_intensity);
    if (s.has("tilt_axis")) {
      const auto axis = s.get<std::string>("tilt_axis");
      if (axis != "x" && axis != "y") throw ConfigError("geometry.tilt_axis must be \"x\" or \"y\"");
      c.geometry.tilt_axis = axis == "x" ? kX : kY;
    }
    if (c.geometry.detector_pixels < 0 || c.geometry.n_angles < 0) {
      throw ConfigError("geometry.detector_pixels and geometry.n_angles must be >= 0");
    }
  }

  if (top.has("noise")) {
    const Section s(top.raw("noise"), "noise",
                    {"model", "variance", "incident_counts", "absorption_potential", "interaction_constant",
                     "bead_diameter"});
    s.read("model", c.noise.model);
    s.read("variance", c.noise.variance);
    s.read("incident_counts", c.noise.counts.incident_counts);
    s.read("absorption_potential", c.noise.counts.absorption_potential);
    s.read("interaction_constant", c.noise.counts.interaction_constant);
    s.read("bead_diameter", c.noise.counts.bead_diameter);
    if (c.noise.model != "none" && c.noise.model != "gaussian" && c.noise.model != "poisson") {
      throw ConfigError("noise.model must be \"none\", \"gaussian\" or \"poisson\"");
    }
    if (!(c.noise.variance >= 0.0)) throw ConfigError("noise.variance must be >= 0");
    c.noise.counts.validate();
  }

  if (top.has("solver")) {
    const Section s(top.raw("solver"), "solver",
                    {"max_iterations", "candidate_grid", "prune_threshold", "loss_tolerance", "bcd_rounds",
                     "sample_box", "refinement_margin", "deformation_bound", "prune_each_iteration",
                     "fit_deformation", "freeze_deformation_first_iteration", "weight_max_iterations",
                     "weight_tolerance", "sigma_mode", "truncation", "deformation_optimizer", "support_optimizer"});
    SolverConfig &o = c.solver;
    s.read("max_iterations", o.max_iterations);
    if (s.has("candidate_grid")) {
      const auto g = s.get<std::vector<int>>("candidate_grid");
      if (g.size() != 3) throw ConfigError("solver.candidate_grid needs 3 entries (x, y, z)");
      std::copy(g.begin(), g.end(), o.candidate_grid.begin());
    }
    s.read("prune_threshold", o.prune_threshold);
    s.read("loss_tolerance", o.loss_tolerance);
    s.read("bcd_rounds", o.bcd_rounds);
    if (s.has("sample_box")) {
      const Section b(s.raw("sample_box"), "solver.sample_box", {"lower", "upper"});
      o.sample_box.lower = read_point(b, "lower", dim);
      o.sample_box.upper = read_point(b, "upper", dim);
      c.has_sample_box = true;
    }
    s.read("refinement_margin", o.refinement_margin);
    s.read("deformation_bound", o.deformation_bound);
    s.read("prune_each_iteration", o.prune_each_iteration);
    s.read("fit_deformation", o.fit_deformation);
    s.read("freeze_deformation_first_iteration", o.freeze_deformation_first_iteration);
    s.read("weight_max_iterations", o.weight_max_iterations);
    s.read("weight_tolerance", o.weight_tolerance);
    if (s.has("sigma_mode")) {
      const auto m = s.get<std::string>("sigma_mode");
      if (m != "consistent" && m != "fixed") {
        throw ConfigError("solver.sigma_mode must be \"consistent\" or \"fixed\"");
      }
      o.render.sigma_mode = m == "consistent" ? SigmaMode::kConsistent : SigmaMode::kFixed;
    }
    s.read("truncation", o.render.truncation);
    read_optimizer(s, "deformation_optimizer", o.deformation_optimizer);
    read_optimizer(s, "support_optimizer", o.support_optimizer);
    o.validate();
  } else if (dim == 3) {
    c.solver.deformation_bound = 2000.0;
  }

  if (top.has("deformation")) {
    const Section s(top.raw("deformation"), "deformation", {"spatial_degree", "temporal_degree", "coordinate_scale"});
    s.read("spatial_degree", c.deformation.spatial_degree);
    s.read("temporal_degree", c.deformation.temporal_degree);
    if (s.has("coordinate_scale")) {
      const auto v = s.get<std::vector<double>>("coordinate_scale");
      if (v.size() != 3 || std::any_of(v.begin(), v.end(), [](double x) { return !(x > 0.0); })) {
        throw ConfigError("deformation.coordinate_scale needs 3 positive entries (x, y, z)");
      }
      c.deformation.coordinate_scale = Point(v[0], v[1], v[2]);
    }
    if (c.deformation.spatial_degree < 0 || c.deformation.temporal_degree < 1) {
      throw ConfigError("deformation degrees out of range (spatial >= 0, temporal >= 1)");
    }
  }

  if (top.has("schedule")) {
    const Section s(top.raw("schedule"), "schedule", {"etas"});
    s.read("etas", c.schedule.etas);
    if (c.schedule.etas.empty()) throw ConfigError("schedule.etas must not be empty");
  }

  if (top.has("output")) {
    const Section s(top.raw("output"), "output", {"directory"});
    s.read("directory", c.output.directory);
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path &path) {
  std::string text;
  try {
    text = read_file_bytes(path);
  } catch (const DataError &e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text, path.string());
}

PhantomSpec make_phantom_spec(const RunConfig &config) {
  const auto &p = config.phantom.preset;
  PhantomSpec spec = p == "2d" ? phantom_spec_2d(config.seed)
                               : phantom_spec_3d(config.seed, p == "3d_cubic" ? Doming3d::kCubic : Doming3d::kQuadratic);
  if (config.phantom.marker_count) spec.marker_count = *config.phantom.marker_count;
  if (config.phantom.shape_sigma) spec.shape_sigma = *config.phantom.shape_sigma;
  spec.validate();
  return spec;
}

TiltGeometry make_simulation_geometry(const RunConfig &config, const PhantomSpec &spec) {
  const int n_px = config.geometry.detector_pixels > 0 ? config.geometry.detector_pixels : 64;
  const int n_ang = config.geometry.n_angles > 0 ? config.geometry.n_angles : (spec.dim == 2 ? 20 : 140);
  TiltGeometry g = spec.dim == 2 ? geometry_2d(spec, n_px, n_ang) : geometry_3d(spec, n_px, n_ang);
  if (!config.geometry.angles_deg.empty()) {
    g.angles_deg = config.geometry.angles_deg;
    g.times = TiltGeometry::uniform_times(g.angles_deg.size());
  }
  if (!config.geometry.times.empty()) g.times = config.geometry.times;
  if (config.geometry.shape_sigma) g.shape_sigma = *config.geometry.shape_sigma;
  if (spec.dim == 3) g.tilt_axis = config.geometry.tilt_axis;
  g.validate();
  return g;
}

DeformationModel make_initial_model(const RunConfig &config, int dim) {
  Point scale = Point::Ones();
  if (config.deformation.coordinate_scale) {
    scale = *config.deformation.coordinate_scale;
  } else if (phantom_dim(config.phantom.preset) == dim) {
    scale = make_phantom_spec(config).ground_truth.coordinate_scale();
  }
  return DeformationModel::for_dimension(dim, config.deformation.spatial_degree, config.deformation.temporal_degree,
                                         scale);
}

SolverConfig make_solver_config(const RunConfig &config) {
  SolverConfig s = config.solver;
  if (!config.has_sample_box) s.sample_box = make_phantom_spec(config).fov;
  s.validate();
  return s;
}

}  // namespace sparsealign
