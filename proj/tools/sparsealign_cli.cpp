// Command-line front end: simulate, align, baseline, eval, render.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sparsealign/baseline.hpp"
#include "sparsealign/config.hpp"
#include "sparsealign/evaluate.hpp"
#include "sparsealign/forward.hpp"
#include "sparsealign/io.hpp"
#include "sparsealign/multires.hpp"
#include "sparsealign/serialize.hpp"
#include "sparsealign/simulate.hpp"
#include "sparsealign/solver.hpp"

namespace fs = std::filesystem;
using namespace sparsealign;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

fs::path output_dir(const std::string &flag, const RunConfig *config) {
  fs::path dir = !flag.empty() ? fs::path(flag) : fs::path(config != nullptr ? config->output.directory : ".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

RunConfig load_config_or_default(const std::string &path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

int run_simulate(const SimulateArgs &a) {
  RunConfig config = load_run_config(a.config);
  if (a.seed) config.seed = *a.seed;
  const PhantomSpec spec = make_phantom_spec(config);
  const Phantom phantom = make_phantom(spec);
  const TiltGeometry geometry = make_simulation_geometry(config, spec);
  const TiltStack clean = render_stack(phantom.markers, phantom.model, geometry);

  TiltStack data = clean;
  if (config.noise.model != "none") {
    const TiltStack counts = scale_to_counts(clean, config.noise.counts);
    NoiseModel noise = PoissonNoise{};
    if (config.noise.model == "gaussian") noise = GaussianNoise{config.noise.variance};
    const TiltStack noisy = add_noise(counts, noise, config.seed);
    data = preprocess_counts(noisy, SimulatedPreprocess{&counts});
  }

  const fs::path dir = output_dir(a.out_dir, &config);
  write_file_bytes(dir / "ground_truth.json", ground_truth_json(spec, phantom));
  write_tiltstack(dir / "stack.tstk", data);
  write_file_bytes(dir / "traces.csv", traces_csv(generate_traces(phantom.markers, phantom.model, geometry)));
  std::cout << "wrote " << (dir / "ground_truth.json").string() << ", " << (dir / "stack.tstk").string() << ", "
            << (dir / "traces.csv").string() << "\n";
  return 0;
}

struct AlignArgs {
  std::string config;
  std::string stack;
  std::string mrc;
  std::string out_dir;
};

int run_align(const AlignArgs &a) {
  const RunConfig config = load_config_or_default(a.config);
  if (a.stack.empty() == a.mrc.empty()) throw ConfigError("align needs exactly one of --stack or --mrc");

  TiltStack data;
  if (!a.stack.empty()) {
    data = read_tiltstack(a.stack);
  } else {
    MrcImportOptions opts;
    opts.angles_deg = config.geometry.angles_deg;
    opts.times = config.geometry.times;
    if (!config.geometry.shape_sigma) throw ConfigError("MRC input needs geometry.shape_sigma");
    opts.shape_sigma = *config.geometry.shape_sigma;
    opts.tilt_axis = config.geometry.tilt_axis;
    data = read_mrc(a.mrc, opts);
    if (config.geometry.bead_intensity) {
      data = preprocess_counts(data, ExperimentalPreprocess{*config.geometry.bead_intensity});
    }
  }

  const SolverConfig solver = make_solver_config(config);
  const ResolutionSchedule schedule =
      make_resolution_schedule(data.geometry.detector.shape, config.schedule.etas, solver.loss_tolerance);
  for (const auto &w : schedule.warnings) std::cerr << "W: " << w << "\n";
  const AlignmentResult result =
      run_coarse_to_fine(data, schedule, solver, make_initial_model(config, data.geometry.dim));

  const fs::path dir = output_dir(a.out_dir, &config);
  write_file_bytes(dir / "result.json", alignment_result_json(result));
  write_file_bytes(dir / "loss_history.csv", loss_history_csv(result.history));
  const double initial = result.levels.empty() ? 0.0 : result.levels.front().initial_loss;
  std::cout << "markers " << result.markers.size() << ", loss " << format_double(initial) << " -> "
            << format_double(result.final_loss) << "\n";
  return 0;
}

struct BaselineArgs {
  std::string config;
  std::string traces;
  std::string stack;
  std::string out;
};

int run_baseline(const BaselineArgs &a) {
  const RunConfig config = load_config_or_default(a.config);
  const TiltGeometry geometry = read_tiltstack_geometry(a.stack);
  const MarkerTraces traces = parse_traces_csv(read_file_bytes(a.traces), geometry.dim, a.traces);
  DomingFitOptions opts;
  opts.deformation_bound = config.solver.deformation_bound;
  const DomingFit fit = dm_fit(traces, geometry, make_initial_model(config, geometry.dim), opts);
  const fs::path out = a.out.empty() ? output_dir("", &config) / "baseline.json" : fs::path(a.out);
  if (out.has_parent_path()) output_dir(out.parent_path().string(), nullptr);
  write_file_bytes(out, doming_fit_json(fit));
  std::cout << "residual " << format_double(fit.residual) << " (" << to_string(fit.status) << ")\n";
  return 0;
}

struct EvalArgs {
  std::string truth;
  std::string estimate;
  std::string out_dir;
  int grid = 0;
  int field_nodes = 200;
  double radius = 0.0;
};

int run_eval(const EvalArgs &a) {
  const ModelDocument truth = parse_model_document(read_file_bytes(a.truth), a.truth);
  const ModelDocument est = parse_model_document(read_file_bytes(a.estimate), a.estimate);
  if (!truth.fov) throw DataError(a.truth + ": ground truth has no field of view");
  const int dim = truth.model.dim();
  const EvaluationGrid grid =
      a.grid > 0 ? make_evaluation_grid(*truth.fov, dim, a.grid) : default_evaluation_grid(*truth.fov, dim);
  // One pixel of the default 64-pixel detector spanning the FoV.
  const double radius = a.radius > 0.0 ? a.radius : truth.fov->extent().x() / 64.0;
  const ErrorReport report = evaluate_alignment(truth.markers, truth.model, est.markers, est.model, grid, radius);
  const ErrorField image =
      deformation_error_field(truth.model, est.model, make_evaluation_grid(*truth.fov, dim, a.field_nodes));

  const fs::path dir = output_dir(a.out_dir, nullptr);
  write_file_bytes(dir / "report.json", error_report_json(report));
  write_file_bytes(dir / "error_field.pgm", error_field_pgm(image));
  write_file_bytes(dir / "error_field.csv", error_field_csv(image));
  std::cout << "E_global " << format_double(report.e_global) << ", E_markers " << format_double(report.e_markers)
            << "\n";
  return 0;
}

struct RenderArgs {
  std::string result;
  std::string like;
  std::string out;
  bool zero_deformation = false;
};

int run_render(const RenderArgs &a) {
  const ModelDocument doc = parse_model_document(read_file_bytes(a.result), a.result);
  TiltGeometry geometry = read_tiltstack_geometry(a.like);
  if (geometry.dim != doc.markers.dim) throw DataError("result and template stack dimensions differ");
  const DeformationModel model = a.zero_deformation ? doc.model.zeroed() : doc.model;
  const TiltStack stack = render_stack(doc.markers, model, geometry);
  const fs::path out(a.out);
  if (out.has_parent_path()) output_dir(out.parent_path().string(), nullptr);
  write_tiltstack(out, stack);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Grid-free fiducial marker localization and deformation estimation for tilt series"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto *c_sim = app.add_subcommand("simulate", "Generate a phantom, its tilt stack and exact traces");
  c_sim->add_option("--config", sim.config, "Run configuration (JSON)")->required();
  c_sim->add_option("--seed", sim.seed, "Override the configured seed");
  c_sim->add_option("--out-dir", sim.out_dir, "Output directory (default: output.directory)");

  AlignArgs al;
  auto *c_al = app.add_subcommand("align", "Localize markers and estimate the deformation");
  c_al->add_option("--config", al.config, "Run configuration (JSON)");
  c_al->add_option("--stack", al.stack, "Input TiltStackFile");
  c_al->add_option("--mrc", al.mrc, "Input MRC2014 stack (angles from the configuration)");
  c_al->add_option("--out-dir", al.out_dir, "Output directory (default: output.directory)");

  BaselineArgs bl;
  auto *c_bl = app.add_subcommand("baseline", "Fit the doming model to labelled traces");
  c_bl->add_option("--config", bl.config, "Run configuration (JSON)");
  c_bl->add_option("--traces", bl.traces, "Trace CSV")->required();
  c_bl->add_option("--stack", bl.stack, "TiltStackFile supplying the geometry")->required();
  c_bl->add_option("--out", bl.out, "Output JSON (default: <output.directory>/baseline.json)");

  EvalArgs ev;
  auto *c_ev = app.add_subcommand("eval", "Compare an estimate against ground truth");
  c_ev->add_option("--truth", ev.truth, "Ground-truth JSON")->required();
  c_ev->add_option("--estimate", ev.estimate, "Result or baseline JSON")->required();
  c_ev->add_option("--out-dir", ev.out_dir, "Output directory")->required();
  c_ev->add_option("--grid", ev.grid, "Evaluation nodes per axis (default 1000 in 2D, 100 in 3D)")
      ->check(CLI::NonNegativeNumber);
  c_ev->add_option("--field-nodes", ev.field_nodes, "Nodes per axis of the exported error image")
      ->check(CLI::PositiveNumber);
  c_ev->add_option("--radius", ev.radius, "Marker matching radius (default FoV width / 64)")
      ->check(CLI::NonNegativeNumber);

  RenderArgs rd;
  auto *c_rd = app.add_subcommand("render", "Render a stack from a result file");
  c_rd->add_option("--result", rd.result, "Result, baseline or ground-truth JSON")->required();
  c_rd->add_option("--like", rd.like, "TiltStackFile supplying the geometry")->required();
  c_rd->add_option("--out", rd.out, "Output TiltStackFile")->required();
  c_rd->add_flag("--zero-deformation", rd.zero_deformation, "Render with the deformation switched off");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "E: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*c_sim) return run_simulate(sim);
    if (*c_al) return run_align(al);
    if (*c_bl) return run_baseline(bl);
    if (*c_ev) return run_eval(ev);
    if (*c_rd) return run_render(rd);
  } catch (const ConfigError &e) {
    std::cerr << "E: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError &e) {
    std::cerr << "E: data: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception &e) {
    std::cerr << "E: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
