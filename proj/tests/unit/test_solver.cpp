#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sparsealign/evaluate.hpp"
#include "sparsealign/simulate.hpp"
#include "sparsealign/solver.hpp"
#include "oracles.hpp"

using namespace sparsealign;
using sparsealign::test_support::random_markers;
using sparsealign::test_support::random_model;
using sparsealign::test_support::small_geometry_2d;
using sparsealign::test_support::small_geometry_3d;

namespace {

MarkerSet markers_of(int dim, std::initializer_list<std::pair<Point, double>> items) {
  MarkerSet m;
  m.dim = dim;
  for (const auto &[p, w] : items) m.add(p, w);
  return m;
}

struct Phantom2d {
  PhantomSpec spec;
  Phantom phantom;
  TiltGeometry geometry;
  TiltStack data;
  SolverConfig config;
};

Phantom2d phantom_2d(std::uint64_t seed) {
  Phantom2d p;
  p.spec = phantom_spec_2d(seed);
  p.phantom = make_phantom(p.spec);
  p.geometry = geometry_2d(p.spec);
  p.data = render_stack(p.phantom.markers, p.phantom.model, p.geometry);
  p.config.sample_box = p.spec.fov;
  return p;
}

}  // namespace

TEST(LossAndResidual, ExactStateHasZeroResidual) {
  const TiltGeometry g = small_geometry_2d();
  std::mt19937_64 rng(1);
  const MarkerSet m = random_markers(rng, 2, 3, 0.3, 0.1);
  const DeformationModel model = random_model(rng, 2, 2, 0.05);
  const LossAndResidual lr = loss_and_residual(m, model, render_stack(m, model, g));
  EXPECT_EQ(lr.loss, 0.0);
  for (double v : lr.residual.values) EXPECT_EQ(v, 0.0);
}

TEST(LossAndResidual, RejectsShapeMismatch) {
  TiltStack data(small_geometry_2d());
  data.values.pop_back();
  EXPECT_THROW(loss_and_residual(MarkerSet{}, DeformationModel::for_dimension(2, 1), data), DataError);
}

TEST(CandidateGrid, NodesCoverBoxAndFollowIndexOrder) {
  Box box{Point(-1.0, -2.0, -0.5), Point(1.0, 2.0, 0.5)};
  const CandidateGrid g = make_candidate_grid(box, {3, 5, 2}, 3, 0.1);
  ASSERT_EQ(g.size(), 30u);
  EXPECT_EQ(g.node(0), box.lower);
  EXPECT_EQ(g.node(29), box.upper);
  EXPECT_EQ(g.node(1), Point(0.0, -2.0, -0.5));
  EXPECT_EQ(g.node(3), Point(-1.0, -1.0, -0.5));
  EXPECT_EQ(g.node(15), Point(-1.0, -2.0, 0.5));
  const CandidateGrid flat = make_candidate_grid(box, {0, 0, 0}, 2, 0.5);
  EXPECT_EQ(flat.shape, (std::array<int, 3>{5, 1, 3}));
  EXPECT_EQ(flat.node(0).y(), 0.0);
}

TEST(Lmo, MatchesExhaustiveScan) {
  std::mt19937_64 rng(12);
  for (int instance = 0; instance < 20; ++instance) {
    const int dim = instance % 2 == 0 ? 2 : 3;
    const TiltGeometry g = dim == 2 ? small_geometry_2d(32, 7) : small_geometry_3d(16, 5);
    const DeformationModel model = random_model(rng, dim, 2, 0.05);
    TiltStack residual = render_stack(random_markers(rng, dim, 3, 0.3, 0.1), model, g);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (double &v : residual.values) v = noise(rng) - v;
    const Box box{Point(-0.4, dim == 3 ? -0.4 : 0.0, -0.1), Point(0.4, dim == 3 ? 0.4 : 0.0, 0.1)};
    const CandidateGrid grid = make_candidate_grid(box, {9, 7, 4}, dim, g.detector.pixel_size);

    const std::size_t best = test_support::exhaustive_lmo(residual, model, grid);
    const LmoChoice choice = lmo_select(residual, model, grid);
    EXPECT_EQ(choice.index, best) << "instance " << instance;
    EXPECT_EQ(choice.location, grid.node(best));
  }
}

TEST(Lmo, RecoversNodeThatGeneratedTheData) {
  const TiltGeometry g = small_geometry_3d(20, 5);
  const Box box{Point(-0.3, -0.3, -0.1), Point(0.3, 0.3, 0.1)};
  const CandidateGrid grid = make_candidate_grid(box, {7, 7, 3}, 3, g.detector.pixel_size);
  const DeformationModel model = DeformationModel::for_dimension(3, 2);
  for (std::size_t k : {0ul, 17ul, 100ul, 146ul}) {
    const TiltStack data = render_stack(markers_of(3, {{grid.node(k), 1.0}}), model, g);
    const auto lr = loss_and_residual(MarkerSet{3, {}, {}}, model, data);
    EXPECT_EQ(lmo_select(lr.residual, model, grid).index, k);
  }
}

TEST(Lmo, ZeroResidualBreaksTieAtIndexZero) {
  const TiltGeometry g = small_geometry_2d();
  const CandidateGrid grid = make_candidate_grid(Box{Point(-0.4, 0, -0.1), Point(0.4, 0, 0.1)}, {5, 1, 3}, 2, 0.02);
  const LmoChoice c = lmo_select(TiltStack(g), DeformationModel::for_dimension(2, 2), grid);
  EXPECT_EQ(c.index, 0u);
  EXPECT_EQ(c.score, 0.0);
}

TEST(Lmo, FirstPickOnPhantomLiesNearCentre) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Phantom2d p = phantom_2d(seed);
    const CandidateGrid grid = make_candidate_grid(p.spec.fov, {0, 0, 0}, 2, p.geometry.detector.pixel_size);
    const auto lr = loss_and_residual(MarkerSet{2, {}, {}}, DeformationModel::for_dimension(2, 2), p.data);
    const LmoChoice c = lmo_select(lr.residual, DeformationModel::for_dimension(2, 2), grid);
    double mean_radius = 0.0;
    for (const Point &r : p.phantom.markers.locations) mean_radius += r.norm();
    mean_radius /= static_cast<double>(p.phantom.markers.size());
    EXPECT_LT(c.location.norm(), mean_radius) << "seed " << seed;
  }
}

TEST(SolveWeights, RecoversInteriorMixture) {
  const TiltGeometry g = small_geometry_2d();
  const DeformationModel model = DeformationModel::for_dimension(2, 2);
  const Point r1(-0.2, 0.0, 0.05), r2(0.25, 0.0, -0.03);
  const TiltStack data = render_stack(markers_of(2, {{r1, 0.7}, {r2, 0.3}}), model, g);
  const auto w = solve_weights(markers_of(2, {{r1, 0.0}, {r2, 0.0}}), model, data);
  EXPECT_NEAR(w[0], 0.7, 1e-6);
  EXPECT_NEAR(w[1], 0.3, 1e-6);
}

TEST(SolveWeights, MatchesNormalEquationsOnInteriorInstances) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uw(0.2, 0.8);
  for (int instance = 0; instance < 10; ++instance) {
    const int dim = instance % 2 == 0 ? 2 : 3;
    const TiltGeometry g = dim == 2 ? small_geometry_2d() : small_geometry_3d();
    const DeformationModel model = random_model(rng, dim, 2, 0.05);
    MarkerSet m = random_markers(rng, dim, 4, 0.35, 0.1);
    for (double &w : m.weights) w = uw(rng);
    TiltStack data = render_stack(m, model, g);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (double &v : data.values) v += noise(rng);

    const Eigen::VectorXd ref = test_support::normal_equation_weights(m, model, data);
    ASSERT_TRUE((ref.array() > 0.0).all() && (ref.array() < 1.0).all());

    MarkerSet start = m;
    for (double &w : start.weights) w = 0.5;
    const auto w = solve_weights(start, model, data);
    for (std::size_t j = 0; j < m.size(); ++j) EXPECT_NEAR(w[j], ref[static_cast<Eigen::Index>(j)], 1e-6);
  }
}

TEST(SolveWeights, ClampsAtBounds) {
  const TiltGeometry g = small_geometry_3d();
  const DeformationModel model = DeformationModel::for_dimension(3, 2);
  const Point r(0.1, -0.1, 0.0);
  const TiltStack heavy = render_stack(markers_of(3, {{r, 1.0}}), model, g);
  TiltStack twice = heavy;
  for (double &v : twice.values) v *= 2.0;
  EXPECT_EQ(solve_weights(markers_of(3, {{r, 0.2}}), model, twice)[0], 1.0);
  const auto w = solve_weights(markers_of(3, {{r, 0.5}, {Point(-0.2, 0.2, 0.0), 0.5}}), model, TiltStack(g));
  EXPECT_EQ(w[0], 0.0);
  EXPECT_EQ(w[1], 0.0);
}

TEST(SolveWeights, NeverIncreasesLoss) {
  std::mt19937_64 rng(40);
  for (int instance = 0; instance < 10; ++instance) {
    const TiltGeometry g = small_geometry_2d();
    const DeformationModel model = random_model(rng, 2, 2, 0.05);
    const TiltStack data = render_stack(random_markers(rng, 2, 4, 0.3, 0.1), model, g);
    MarkerSet m = random_markers(rng, 2, 5, 0.3, 0.1);
    const double before = image_loss(m, model, data);
    m.weights = solve_weights(m, model, data);
    EXPECT_LE(image_loss(m, model, data), before);
    for (double w : m.weights) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
    }
  }
}

TEST(Prune, DropsLightMarkersAndKeepsOrder) {
  const MarkerSet m = markers_of(2, {{Point(0.1, 0, 0), 0.5}, {Point(0.2, 0, 0), 0.05}, {Point(0.3, 0, 0), 0.1}});
  const MarkerSet p = prune(m, 0.1);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.locations[0].x(), 0.1);
  EXPECT_EQ(p.locations[1].x(), 0.3);
  EXPECT_EQ(prune(m, 0.0).size(), 3u);
  EXPECT_EQ(prune(markers_of(2, {{Point::Zero(), 0.0}}), 0.0).size(), 1u);
  EXPECT_TRUE(prune(m, 0.9).empty());
}

TEST(Prune, LossChangeEqualsRemovedContribution) {
  std::mt19937_64 rng(2);
  const TiltGeometry g = small_geometry_2d();
  const DeformationModel model = random_model(rng, 2, 2, 0.05);
  MarkerSet m = random_markers(rng, 2, 5, 0.3, 0.1);
  m.weights[1] = 0.04;
  m.weights[3] = 0.08;
  const TiltStack data = render_stack(random_markers(rng, 2, 4, 0.3, 0.1), model, g);
  const MarkerSet kept = prune(m, 0.1);
  const MarkerSet removed = markers_of(2, {{m.locations[1], 0.04}, {m.locations[3], 0.08}});
  const TiltStack full = render_stack(m, model, g), part = render_stack(kept, model, g),
                  gone = render_stack(removed, model, g);
  for (std::size_t i = 0; i < full.values.size(); ++i) EXPECT_NEAR(full.values[i] - part.values[i], gone.values[i], 1e-14);
  // ||R - G||^2 - ||R||^2 = -2 <R, G> + ||G||^2 with R the full residual.
  const auto lr = loss_and_residual(m, model, data);
  const double predicted = lr.loss - 2.0 * test_support::stack_dot(lr.residual, gone) + gone.squared_norm();
  EXPECT_NEAR(image_loss(kept, model, data), predicted, 1e-10 * lr.loss);
}

TEST(FitDeformation, RecoversTruthFromNearbyStart) {
  const Phantom2d p = phantom_2d(1);
  const Eigen::VectorXd truth = p.phantom.model.parameters();
  DeformationModel start = p.phantom.model;
  start.set_parameters(0.9 * truth);
  const DeformationModel fit = fit_deformation(p.phantom.markers, start, p.data, p.config);
  EXPECT_LT((fit.parameters() - truth).cwiseAbs().maxCoeff(), 1e-4 * truth.cwiseAbs().maxCoeff());
}

TEST(FitDeformation, ZeroTruthIsStationary) {
  const TiltGeometry g = small_geometry_2d();
  std::mt19937_64 rng(3);
  const MarkerSet m = random_markers(rng, 2, 4, 0.3, 0.1);
  const DeformationModel zero = DeformationModel::for_dimension(2, 2);
  const DeformationModel fit = fit_deformation(m, zero, render_stack(m, zero, g));
  EXPECT_TRUE(fit.is_zero());
}

TEST(FitDeformation, NeverIncreasesLoss) {
  std::mt19937_64 rng(5);
  for (int instance = 0; instance < 20; ++instance) {
    const int dim = instance % 2 == 0 ? 2 : 3;
    const TiltGeometry g = dim == 2 ? small_geometry_2d(32, 7) : small_geometry_3d(16, 5);
    const MarkerSet truth = random_markers(rng, dim, 3, 0.3, 0.1);
    const TiltStack data = render_stack(truth, random_model(rng, dim, 2, 0.05), g);
    const DeformationModel start = random_model(rng, dim, 2, 0.05);
    const double before = image_loss(truth, start, data);
    const DeformationModel fit = fit_deformation(truth, start, data);
    EXPECT_LE(image_loss(truth, fit, data), before) << "instance " << instance;
  }
}

TEST(RefineSupport, ReachesSubPixelAccuracyFromGridNode) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.25, 0.25);
  for (int instance = 0; instance < 5; ++instance) {
    const TiltGeometry g = small_geometry_2d(64, 20, 0.02);
    const DeformationModel model = DeformationModel::for_dimension(2, 2);
    const Point truth(u(rng), 0.0, 0.3 * u(rng));
    const TiltStack data = render_stack(markers_of(2, {{truth, 1.0}}), model, g);
    SolverConfig cfg;
    cfg.sample_box = Box{Point(-0.5, 0.0, -0.5), Point(0.5, 0.0, 0.5)};
    const CandidateGrid grid = make_candidate_grid(cfg.sample_box, {0, 0, 0}, 2, g.detector.pixel_size);
    std::size_t nearest = 0;
    for (std::size_t k = 1; k < grid.size(); ++k)
      if ((grid.node(k) - truth).norm() < (grid.node(nearest) - truth).norm()) nearest = k;
    const MarkerSet start = markers_of(2, {{grid.node(nearest), 1.0}});
    const MarkerSet out = refine_support(start, model, data, refinement_box(cfg, g), cfg);
    EXPECT_LT((out.locations[0] - truth).norm(), 0.1 * g.detector.pixel_size) << "instance " << instance;
    EXPECT_LE(image_loss(out, model, data), image_loss(start, model, data));
  }
}

TEST(RefineSupport, OptimalStateIsUnchanged) {
  const TiltGeometry g = small_geometry_3d();
  std::mt19937_64 rng(8);
  const MarkerSet m = random_markers(rng, 3, 3, 0.3, 0.1);
  const DeformationModel model = random_model(rng, 3, 2, 0.05);
  const Box box{Point::Constant(-1.0), Point::Constant(1.0)};
  const MarkerSet out = refine_support(m, model, render_stack(m, model, g), box);
  for (std::size_t j = 0; j < m.size(); ++j) EXPECT_LT((out.locations[j] - m.locations[j]).norm(), 1e-9);
}

TEST(RefineSupport, MarkerOnBoundaryMovesInward) {
  const TiltGeometry g = small_geometry_2d();
  const DeformationModel model = DeformationModel::for_dimension(2, 2);
  const Box box{Point(-0.2, 0.0, -0.2), Point(0.2, 0.0, 0.2)};
  const TiltStack data = render_stack(markers_of(2, {{Point(0.18, 0.0, 0.0), 1.0}}), model, g);
  const MarkerSet out = refine_support(markers_of(2, {{Point(0.2, 0.0, 0.0), 1.0}}), model, data, box);
  EXPECT_LT(out.locations[0].x(), 0.2);
  EXPECT_NEAR(out.locations[0].x(), 0.18, 1e-4);
  EXPECT_TRUE(box.contains(out.locations[0]));
}

TEST(RefineSupport, StaysInsideBox) {
  const TiltGeometry g = small_geometry_2d();
  const DeformationModel model = DeformationModel::for_dimension(2, 2);
  const Box box{Point(-0.1, 0.0, -0.1), Point(0.1, 0.0, 0.1)};
  const TiltStack data = render_stack(markers_of(2, {{Point(0.3, 0.0, 0.0), 1.0}}), model, g);
  const MarkerSet out = refine_support(markers_of(2, {{Point(0.05, 0.0, 0.0), 1.0}}), model, data, box);
  EXPECT_TRUE(box.contains(out.locations[0]));
}

TEST(RunSparseAlign, LocalizesAllPhantomMarkers) {
  Phantom2d p = phantom_2d(1);
  p.config.max_iterations = 15;
  const SolverState st = run_sparsealign(p.data, p.config, SolverState::cold(2, DeformationModel::for_dimension(2, 2)));
  EXPECT_LE(st.iterations, 15);
  const MarkerMatching match = match_markers(st.markers, p.phantom.markers, p.geometry.detector.pixel_size);
  EXPECT_EQ(match.matches.size(), 10u);
  EXPECT_TRUE(match.missed.empty());
}

TEST(RunSparseAlign, AllZeroDataStopsAfterFirstIteration) {
  const TiltGeometry g = small_geometry_2d();
  SolverConfig cfg;
  cfg.sample_box = Box{Point(-0.4, 0.0, -0.1), Point(0.4, 0.0, 0.1)};
  const SolverState st = run_sparsealign(TiltStack(g), cfg, SolverState::cold(2, DeformationModel::for_dimension(2, 2)));
  EXPECT_EQ(st.iterations, 1);
  EXPECT_EQ(st.loss, 0.0);
  EXPECT_TRUE(st.markers.empty());
}

TEST(RunSparseAlign, IsDeterministic) {
  const Phantom2d p = phantom_2d(2);
  SolverConfig cfg = p.config;
  cfg.max_iterations = 6;
  const SolverState a = run_sparsealign(p.data, cfg, SolverState::cold(2, DeformationModel::for_dimension(2, 2)));
  const SolverState b = run_sparsealign(p.data, cfg, SolverState::cold(2, DeformationModel::for_dimension(2, 2)));
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].loss, b.history[i].loss);
  EXPECT_EQ(a.markers.locations, b.markers.locations);
}

TEST(RunSparseAlign, RunInvariants) {
  for (std::uint64_t seed : {3u, 4u}) {
    const Phantom2d p = phantom_2d(seed);
    const SolverState st = run_sparsealign(p.data, p.config, SolverState::cold(2, DeformationModel::for_dimension(2, 2)));
    EXPECT_LE(st.markers.size(), static_cast<std::size_t>(st.iterations));
    for (double w : st.markers.weights) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
    }
    // Marker count grows by at most one per outer iteration before pruning;
    // the weight, deformation and support steps never raise the loss.
    std::size_t previous_count = 0;
    for (std::size_t i = 1; i < st.history.size(); ++i) {
      const LossRecord &r = st.history[i], &prev = st.history[i - 1];
      if (r.step == BcdStep::kWeights && prev.step != BcdStep::kSupport) {
        EXPECT_LE(r.markers, previous_count + 1);
      }
      if (r.step == BcdStep::kWeights || r.step == BcdStep::kDeformation || r.step == BcdStep::kSupport) {
        if (r.iteration == prev.iteration && prev.step != BcdStep::kEntry) EXPECT_LE(r.loss, prev.loss) << "seed " << seed << " record " << i;
      }
      previous_count = r.markers;
    }
    EXPECT_LT(st.loss, 1e-4 * p.data.squared_norm());
  }
}

TEST(CoarseToFine, SingleFullLevelEqualsSingleRunPlusPrune) {
  const Phantom2d p = phantom_2d(1);
  SolverConfig cfg = p.config;
  cfg.max_iterations = 8;
  const DeformationModel init = DeformationModel::for_dimension(2, 2);
  const AlignmentResult r = run_coarse_to_fine(p.data, make_resolution_schedule({64}, {1.0}, cfg.loss_tolerance), cfg, init);
  const SolverState st = run_sparsealign(p.data, cfg, SolverState::cold(2, init));
  const MarkerSet pruned = prune(st.markers, cfg.prune_threshold);
  EXPECT_EQ(r.markers.locations, pruned.locations);
  EXPECT_EQ(r.markers.weights, pruned.weights);
  EXPECT_EQ(r.model.parameters(), st.model.parameters());
  ASSERT_EQ(r.history.size(), st.history.size());
  for (std::size_t i = 0; i < st.history.size(); ++i) EXPECT_EQ(r.history[i].loss, st.history[i].loss);
  ASSERT_EQ(r.levels.size(), 1u);
  EXPECT_EQ(r.levels[0].iterations, st.iterations);
}

TEST(CoarseToFine, WarmStartBeatsColdStartAtSecondLevel) {
  const PhantomSpec spec = phantom_spec_3d(1);
  const Phantom ph = make_phantom(spec);
  const TiltGeometry g = geometry_3d(spec, 32, 40);
  const TiltStack data = render_stack(ph.markers, ph.model, g);
  SolverConfig cfg;
  cfg.sample_box = spec.fov;
  cfg.deformation_bound = 2000.0;
  cfg.max_iterations = 25;
  const DeformationModel init = spec.ground_truth.zeroed();
  const AlignmentResult warm = run_coarse_to_fine(data, make_resolution_schedule({32, 32}, {0.25, 0.5}, 1e-6), cfg, init);
  ASSERT_EQ(warm.levels.size(), 2u);
  const TiltStack level2 = downsample_stack(data, 0.5);
  SolverConfig single = cfg;
  single.max_iterations = 1;
  const SolverState cold = run_sparsealign(level2, single, SolverState::cold(3, init));
  EXPECT_LT(warm.levels[1].initial_loss, cold.history.front().loss);
}
