#include "sparsealign/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sparsealign {

namespace {

std::vector<int> location_axes(int dim) {
  return dim == 2 ? std::vector<int>{kX, kZ} : std::vector<int>{kX, kY, kZ};
}

/// Gram matrix and data correlations of unit marker responses.
struct WeightSystem {
  Eigen::MatrixXd gram;
  Eigen::VectorXd rhs;
};

WeightSystem weight_system(const MarkerSet &markers, const DeformationModel &model, const TiltStack &data,
                           const RenderOptions &options) {
  const TiltGeometry &g = data.geometry;
  const auto m = static_cast<Eigen::Index>(markers.size());
  const double sigma = effective_sigma(g, options.sigma_mode);
  WeightSystem sys{Eigen::MatrixXd::Zero(m, m), Eigen::VectorXd::Zero(m)};
  std::vector<Footprint> fp(markers.size());
  for (std::size_t t = 0; t < g.frame_count(); ++t) {
    const auto q = projected_locations(markers, model, g, t);
    for (std::size_t j = 0; j < markers.size(); ++j)
      fp[j] = marker_footprint(q[j], g.detector, g.dim, sigma, options.truncation);
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto &fj = fp[static_cast<std::size_t>(j)];
      sys.rhs[j] += footprint_dot(fj, data.frame(t), g.detector);
      for (Eigen::Index k = 0; k <= j; ++k) {
        const double v = footprint_overlap(fj, fp[static_cast<std::size_t>(k)]);
        sys.gram(j, k) += v;
        if (k != j) sys.gram(k, j) += v;
      }
    }
  }
  return sys;
}

double quadratic_value(const WeightSystem &s, const Eigen::VectorXd &w) {
  return w.dot(s.gram * w) - 2.0 * s.rhs.dot(w);
}

void check_finite_gradient(const Eigen::VectorXd &grad, const std::vector<std::string> &names) {
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw DataError("non-finite gradient for " + names[static_cast<std::size_t>(i)]);
    }
  }
}

void record(SolverState &state, BcdStep step, double loss) {
  state.loss = loss;
  state.history.push_back({state.level, state.iterations, step, loss, state.markers.size()});
}

}  // namespace

void SolverConfig::validate() const {
  if (max_iterations < 1) throw ConfigError("solver.max_iterations must be >= 1");
  if (!(prune_threshold >= 0.0 && prune_threshold < 1.0)) throw ConfigError("solver.prune_threshold must lie in [0, 1)");
  if (!(loss_tolerance > 0.0)) throw ConfigError("solver.loss_tolerance must be positive");
  if (bcd_rounds < 1) throw ConfigError("solver.bcd_rounds must be >= 1");
  if (!(deformation_bound > 0.0)) throw ConfigError("solver.deformation_bound must be positive");
  if ((sample_box.upper.array() < sample_box.lower.array()).any()) throw ConfigError("sample box is inverted");
  for (int n : candidate_grid)
    if (n < 0) throw ConfigError("candidate grid extents must be >= 0");
}

std::string to_string(BcdStep step) {
  switch (step) {
    case BcdStep::kEntry: return "entry";
    case BcdStep::kWeights: return "weights";
    case BcdStep::kPrune: return "prune";
    case BcdStep::kDeformation: return "deformation";
    case BcdStep::kSupport: return "support";
  }
  return "unknown";
}

SolverState SolverState::cold(int dim, DeformationModel model) {
  SolverState s;
  s.markers.dim = dim;
  s.model = std::move(model);
  return s;
}

LossAndResidual loss_and_residual(const MarkerSet &markers, const DeformationModel &model,
                                  const TiltStack &data, const RenderOptions &options) {
  LossAndResidual out{0.0, residual_stack(markers, model, data, options)};
  for (double v : out.residual.values) out.loss += v * v;
  return out;
}

std::size_t CandidateGrid::size() const {
  return static_cast<std::size_t>(shape[0]) * static_cast<std::size_t>(shape[1]) *
         static_cast<std::size_t>(shape[2]);
}

Point CandidateGrid::node(std::size_t index) const {
  const std::size_t nx = static_cast<std::size_t>(shape[0]);
  const std::size_t ny = static_cast<std::size_t>(shape[1]);
  const std::size_t idx[3] = {index % nx, (index / nx) % ny, index / (nx * ny)};
  Point p;
  for (int a = 0; a < 3; ++a) {
    p[a] = shape[a] == 1 ? 0.5 * (box.lower[a] + box.upper[a])
                         : box.lower[a] + (box.upper[a] - box.lower[a]) * static_cast<double>(idx[a]) /
                                              static_cast<double>(shape[a] - 1);
  }
  return p;
}

CandidateGrid make_candidate_grid(const Box &sample_box, std::array<int, 3> shape, int dim, double pixel_size) {
  CandidateGrid grid;
  grid.box = sample_box;
  for (int a = 0; a < 3; ++a) {
    if (dim == 2 && a == kY) {
      grid.shape[a] = 1;
      grid.box.lower[a] = grid.box.upper[a] = 0.0;
      continue;
    }
    if (shape[a] > 0) {
      grid.shape[a] = shape[a];
    } else {
      const double extent = sample_box.upper[a] - sample_box.lower[a];
      grid.shape[a] = extent > 0.0 ? std::max(2, static_cast<int>(std::lround(extent / pixel_size)) + 1) : 1;
    }
  }
  return grid;
}

LmoChoice lmo_select(const TiltStack &residual, const DeformationModel &model, const CandidateGrid &grid,
                     const RenderOptions &options) {
  LmoChoice best;
  best.score = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point r = grid.node(k);
    const double v = unit_response_inner_product(r, model, residual, options);
    if (v < best.score) best = {k, r, v};
  }
  return best;
}

std::vector<double> solve_weights(const MarkerSet &markers, const DeformationModel &model, const TiltStack &data,
                                  const SolverConfig &config) {
  const auto m = static_cast<Eigen::Index>(markers.size());
  if (m == 0) return {};
  const WeightSystem sys = weight_system(markers, model, data, config.render);

  Eigen::VectorXd w(m);
  for (Eigen::Index j = 0; j < m; ++j) w[j] = std::clamp(markers.weights[static_cast<std::size_t>(j)], 0.0, 1.0);
  const Eigen::VectorXd lo = Eigen::VectorXd::Zero(m);
  const Eigen::VectorXd hi = Eigen::VectorXd::Ones(m);
  const double lipschitz = std::max(sys.gram.selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff(), 1e-300);

  auto projected_step_norm = [&](const Eigen::VectorXd &x) {
    return (x - (x - (sys.gram * x - sys.rhs)).cwiseMax(lo).cwiseMin(hi)).cwiseAbs().maxCoeff();
  };

  // Projected gradient with an exact line search along the projected step.
  for (int it = 0; it < config.weight_max_iterations; ++it) {
    const Eigen::VectorXd grad = sys.gram * w - sys.rhs;
    if (projected_step_norm(w) <= config.weight_tolerance) break;
    const Eigen::VectorXd d = (w - grad / lipschitz).cwiseMax(lo).cwiseMin(hi) - w;
    const double curvature = d.dot(sys.gram * d);
    const double slope = grad.dot(d);
    if (!(slope < 0.0)) break;
    const double tau = curvature > 0.0 ? std::min(1.0, -slope / curvature) : 1.0;
    w = (w + tau * d).cwiseMax(lo).cwiseMin(hi);
  }

  // Newton polish on the free set; accepted only when feasible and no worse.
  for (int pass = 0; pass < 3; ++pass) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < m; ++j)
      if (w[j] > 0.0 && w[j] < 1.0) free.push_back(j);
    if (free.empty()) break;
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd a(nf, nf);
    Eigen::VectorXd b(nf);
    for (Eigen::Index i = 0; i < nf; ++i) {
      b[i] = sys.rhs[free[static_cast<std::size_t>(i)]];
      for (Eigen::Index j = 0; j < m; ++j) {
        const bool is_free = std::find(free.begin(), free.end(), j) != free.end();
        if (!is_free) b[i] -= sys.gram(free[static_cast<std::size_t>(i)], j) * w[j];
      }
      for (Eigen::Index k = 0; k < nf; ++k)
        a(i, k) = sys.gram(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(k)]);
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) break;
    const Eigen::VectorXd sol = ldlt.solve(b);
    if (!sol.allFinite() || (sol.array() < 0.0).any() || (sol.array() > 1.0).any()) break;
    Eigen::VectorXd candidate = w;
    for (Eigen::Index i = 0; i < nf; ++i) candidate[free[static_cast<std::size_t>(i)]] = sol[i];
    if (quadratic_value(sys, candidate) > quadratic_value(sys, w)) break;
    const bool changed = (candidate - w).cwiseAbs().maxCoeff() > 0.0;
    w = candidate;
    if (!changed || projected_step_norm(w) <= config.weight_tolerance) break;
  }

  return {w.data(), w.data() + m};
}

MarkerSet prune(const MarkerSet &markers, double threshold) {
  MarkerSet out;
  out.dim = markers.dim;
  for (std::size_t j = 0; j < markers.size(); ++j)
    if (!(markers.weights[j] < threshold)) out.add(markers.locations[j], markers.weights[j]);
  return out;
}

DeformationModel fit_deformation(const MarkerSet &markers, const DeformationModel &model, const TiltStack &data,
                                 const SolverConfig &config) {
  const int n = model.parameter_count();
  if (n == 0 || markers.empty()) return model;
  std::vector<std::string> names;
  for (int p = 0; p < n; ++p) names.push_back(model.parameter_name(p));

  DeformationModel work = model;
  const GradientBlocks blocks{false, false, true};
  LossGradient grad;
  Objective objective = [&](const Eigen::VectorXd &p, Eigen::VectorXd &g) {
    work.set_parameters(p);
    const double f = image_loss(markers, work, data, config.render, blocks, &grad);
    check_finite_gradient(grad.deformation, names);
    g = grad.deformation;
    return f;
  };
  const Eigen::VectorXd bound = Eigen::VectorXd::Constant(n, config.deformation_bound);
  const auto res = minimize_bounded_lbfgs(objective, model.parameters(), -bound, bound, config.deformation_optimizer);
  DeformationModel out = model;
  out.set_parameters(res.x);
  return out;
}

Box refinement_box(const SolverConfig &config, const TiltGeometry &geometry) {
  const double margin = config.refinement_margin >= 0.0 ? config.refinement_margin : 2.0 * geometry.shape_sigma;
  return config.sample_box.inflated(margin, geometry.dim);
}

MarkerSet refine_support(const MarkerSet &markers, const DeformationModel &model, const TiltStack &data,
                         const Box &box, const SolverConfig &config) {
  if (markers.empty()) return markers;
  const auto axes = location_axes(markers.dim);
  const auto na = static_cast<Eigen::Index>(axes.size());
  const auto n = na * static_cast<Eigen::Index>(markers.size());

  Eigen::VectorXd x0(n), lo(n), hi(n);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < markers.size(); ++j) {
    for (Eigen::Index a = 0; a < na; ++a) {
      const auto idx = static_cast<Eigen::Index>(j) * na + a;
      const int axis = axes[static_cast<std::size_t>(a)];
      x0[idx] = markers.locations[j][axis];
      lo[idx] = box.lower[axis];
      hi[idx] = box.upper[axis];
      names.push_back("marker " + std::to_string(j) + " coordinate " + "xyz"[axis]);
    }
  }

  MarkerSet work = markers;
  const GradientBlocks blocks{true, false, false};
  LossGradient grad;
  auto unpack = [&](const Eigen::VectorXd &x) {
    for (std::size_t j = 0; j < work.size(); ++j)
      for (Eigen::Index a = 0; a < na; ++a)
        work.locations[j][axes[static_cast<std::size_t>(a)]] = x[static_cast<Eigen::Index>(j) * na + a];
  };
  Objective objective = [&](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
    unpack(x);
    const double f = image_loss(work, model, data, config.render, blocks, &grad);
    g.resize(n);
    for (std::size_t j = 0; j < work.size(); ++j)
      for (Eigen::Index a = 0; a < na; ++a)
        g[static_cast<Eigen::Index>(j) * na + a] = grad.locations[j][axes[static_cast<std::size_t>(a)]];
    check_finite_gradient(g, names);
    return f;
  };
  const auto res = minimize_bounded_lbfgs(objective, x0, lo, hi, config.support_optimizer);
  unpack(res.x);
  return work;
}

SolverState run_sparsealign(const TiltStack &data, const SolverConfig &config, SolverState state) {
  config.validate();
  data.validate();
  const TiltGeometry &g = data.geometry;
  if (state.markers.dim != g.dim || state.model.dim() != g.dim) {
    throw ConfigError("solver state dimension does not match the data");
  }
  const bool cold_start = state.markers.empty() && state.model.is_zero();
  const Box box = refinement_box(config, g);
  const CandidateGrid grid = make_candidate_grid(config.sample_box, config.candidate_grid, g.dim, g.detector.pixel_size);

  state.iterations = 0;
  state.iteration_losses.clear();
  auto current_loss = [&] { return image_loss(state.markers, state.model, data, config.render); };
  record(state, BcdStep::kEntry, current_loss());
  double previous = state.loss;

  for (int n = 1; n <= config.max_iterations; ++n) {
    state.iterations = n;
    try {
      // 1) residual, 2) LMO, 3) support update.
      LossAndResidual lr = loss_and_residual(state.markers, state.model, data, config.render);
      state.residual = std::move(lr.residual);
      const LmoChoice choice = lmo_select(state.residual, state.model, grid, config.render);
      state.markers.add(choice.location, 0.0);

      // 4) block coordinate descent.
      for (int round = 0; round < config.bcd_rounds; ++round) {
        // The Gram-form objective cannot resolve changes near its rounding
        // floor; keep the entry weights when the rendered loss does not improve.
        const std::vector<double> entry_weights = state.markers.weights;
        const double entry_loss = state.loss;
        state.markers.weights = solve_weights(state.markers, state.model, data, config);
        double loss = current_loss();
        if (loss > entry_loss) {
          state.markers.weights = entry_weights;
          loss = entry_loss;
        }
        record(state, BcdStep::kWeights, loss);

        if (config.prune_each_iteration) {
          const std::size_t before = state.markers.size();
          state.markers = prune(state.markers, config.prune_threshold);
          if (state.markers.size() != before) state.markers.weights = solve_weights(state.markers, state.model, data, config);
          record(state, BcdStep::kPrune, current_loss());
        }

        const bool frozen = cold_start && n == 1 && config.freeze_deformation_first_iteration;
        if (config.fit_deformation && !frozen) {
          state.model = fit_deformation(state.markers, state.model, data, config);
          record(state, BcdStep::kDeformation, current_loss());
        }

        state.markers = refine_support(state.markers, state.model, data, box, config);
        record(state, BcdStep::kSupport, current_loss());
      }
    } catch (const Error &e) {
      std::ostringstream os;
      os << "iteration " << n << " (level " << state.level << "): " << e.what();
      throw DataError(os.str());
    }

    state.iteration_losses.push_back(state.loss);
    if (std::abs(previous - state.loss) < config.loss_tolerance) break;
    previous = state.loss;
  }
  state.residual = residual_stack(state.markers, state.model, data, config.render);
  return state;
}

AlignmentResult run_coarse_to_fine(const TiltStack &data_full, const ResolutionSchedule &schedule,
                                   const SolverConfig &config, const DeformationModel &initial_model) {
  schedule.validate();
  data_full.validate();
  if (data_full.geometry.eta != 1.0) throw ConfigError("coarse-to-fine input must be full-resolution data");

  AlignmentResult result;
  SolverState state = SolverState::cold(data_full.geometry.dim, initial_model);
  TiltStack finest;
  for (std::size_t level = 0; level < schedule.levels.size(); ++level) {
    const ResolutionLevel &lv = schedule.levels[level];
    TiltStack data = downsample_stack(data_full, lv.eta);
    SolverConfig cfg = config;
    cfg.loss_tolerance = lv.tolerance;
    state.level = static_cast<int>(level);
    state = run_sparsealign(data, cfg, std::move(state));

    LevelSummary summary;
    summary.eta = lv.eta;
    summary.iterations = state.iterations;
    for (const LossRecord &r : state.history) {
      if (r.level == static_cast<int>(level) && r.step == BcdStep::kEntry) {
        summary.initial_loss = r.loss;
        break;
      }
    }
    summary.final_loss = state.loss;
    summary.markers = state.markers;
    summary.model = state.model;
    result.levels.push_back(std::move(summary));
    finest = std::move(data);
  }

  result.markers = prune(state.markers, config.prune_threshold);
  result.model = state.model;
  result.history = std::move(state.history);
  result.final_loss = result.markers.size() == state.markers.size()
                          ? state.loss
                          : image_loss(result.markers, result.model, finest, config.render);
  return result;
}

}  // namespace sparsealign
