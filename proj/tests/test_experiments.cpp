#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include "invreg/errors.hpp"
#include "invreg/experiments.hpp"
#include "invreg/op_count.hpp"

using namespace invreg;

TEST_CASE("fmt and csv documents") {
  CHECK(fmt(0.1) == "0.1");
  CHECK(fmt(1.0 / 3.0) == "0.333333333333");
  CHECK(fmt(1e-30) == "1e-30");
  CHECK(fmt(std::nan("")) == "nan");
  CHECK(fmt(-INFINITY) == "-inf");
  CsvTable t{{"a", "b"}, {}};
  t.add({"1", "x,y"});
  t.add({"say \"hi\"", ""});
  CHECK(csv_document(t, "00ff", 7) == "# config_hash=00ff seed=7\r\na,b\r\n1,\"x,y\"\r\n\"say \"\"hi\"\"\",\r\n");
}

TEST_CASE("derived seeds are distinct and stable") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(s, i));
  CHECK(seen.size() == 4000);
  CHECK(derive_seed(3, 5) == derive_seed(3, 5));
}

TEST_CASE("parallel_for visits every index once and rethrows the lowest failure") {
  for (int jobs : {1, 3, 16}) {
    std::vector<std::atomic<int>> hits(50);
    parallel_for(50, jobs, [&](int i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
    try {
      parallel_for(20, jobs, [](int i) {
        if (i == 7 || i == 13) throw std::runtime_error(std::to_string(i));
      });
      FAIL("expected a throw");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "7");
    }
  }
  parallel_for(0, 4, [](int) { FAIL("no calls expected"); });
}

TEST_CASE("bound check allows only round-off") {
  CHECK(bound_holds(1.0, 1.0));
  CHECK(bound_holds(1.0 + 1e-13, 1.0));
  CHECK_FALSE(bound_holds(1.0 + 1e-9, 1.0));
  CHECK(bound_holds(1e-29, 0.0));
  CHECK_FALSE(bound_holds(1e-20, 0.0));
}

TEST_CASE("complexity samplers stay in their ranges") {
  std::mt19937_64 rng(3);
  for (MotionModel m : {MotionModel::translation, MotionModel::euclidean, MotionModel::similarity,
                        MotionModel::affine}) {
    const TransformSampler s = complexity_sampler(m);
    CHECK(s.mode == m);
    CHECK(s.max_translation == 5.0);
    CHECK(s.max_rotation == doctest::Approx(std::numbers::pi / 4));
    CHECK(s.min_scale == 0.8);
    CHECK(s.max_scale == 1.25);
  }
}

TEST_CASE("textured trial places the motif at the truth") {
  TransformParams truth = TransformParams::identity(MotionModel::euclidean);
  truth.A = rotation(0.2);
  truth.b = Eigen::Vector2d(3, -2);
  const TexturedTrial t = textured_trial(truth, 11, 12, 32, 96);
  CHECK(t.problem.scene.rows() == 96);
  CHECK(t.problem.motif.rows() == 32);
  CHECK(registration_zncc(t.problem, t.truth) >= 0.99);
  CHECK(registration_zncc(t.problem, TransformParams::identity(MotionModel::euclidean, t.truth.center)) < 0.9);
}

TEST_CASE("register_images recovers a small shift") {
  TransformParams truth = TransformParams::identity(MotionModel::translation);
  truth.b = Eigen::Vector2d(2.5, -1.5);
  const TexturedTrial t = textured_trial(truth, 21, 22, 32, 96);
  RegisterOptions opt;
  opt.model = MotionModel::translation;
  opt.sigma_start = 4.0;
  opt.iters = 100;
  const RegisterOutcome o = register_images(t.problem.scene, t.problem.motif, t.problem.mask, opt);
  CHECK(o.similarity >= 0.99);
  CHECK((o.result.params.b - truth.b).norm() < 0.2);
  opt.variant = "nonsense";
  CHECK_THROWS_AS(register_images(t.problem.scene, t.problem.motif, t.problem.mask, opt), ConfigError);
}

TEST_CASE("basin runs are deterministic and independent of thread count") {
  BasinConfig cfg;
  cfg.translations = {0, 2};
  cfg.axis_values = {0, 0.1};
  cfg.runs = 2;
  cfg.motif_size = 24;
  cfg.scene_size = 64;
  cfg.schedule.sigma_start = 3;
  cfg.schedule.iters = 20;
  cfg.schedule.halve_every = 10;
  const BasinResult a = run_basin(cfg, 5, 1), b = run_basin(cfg, 5, 3);
  REQUIRE(a.cells.size() == 4);
  CHECK(a.runs.size() == 8);
  const std::string ca = csv_document(basin_runs_csv(a), "0", 5), cb = csv_document(basin_runs_csv(b), "0", 5);
  CHECK(ca == cb);
  CHECK(csv_document(basin_cells_csv(a), "0", 5) == csv_document(basin_cells_csv(b), "0", 5));
  // Identity cell: translation 0, rotation 0.
  CHECK(a.cells[0].mean_zncc >= 0.99);
  for (const BasinRun& r : a.runs) CHECK(r.truth.b.cwiseAbs().maxCoeff() == doctest::Approx(r.translation));
}

TEST_CASE("complexity trial counts are reproducible and ordered") {
  ComplexityConfig cfg;
  cfg.modes = {MotionModel::translation};
  cfg.seeds = 1;
  cfg.motif_size = 32;
  cfg.scene_size = 96;
  const ComplexityTrial a = complexity_trial(cfg, MotionModel::translation, 0, 9);
  const ComplexityTrial b = complexity_trial(cfg, MotionModel::translation, 0, 9);
  CHECK(a.opt_units == b.opt_units);
  CHECK(a.cover_draws == b.cover_draws);
  CHECK(a.opt_converged);
  CHECK(a.opt_zncc >= 0.9);
  CHECK(a.opt_units == a.opt_interpolations + a.opt_convolutions);
  CHECK(a.cover_units == 2 * a.cover_draws);
  if (a.cover_converged) CHECK(a.cover_zncc >= 0.9);
}

TEST_CASE("small spike experiment satisfies the bound") {
  SpikeExperimentConfig cfg;
  cfg.continuum_instances = 6;
  cfg.continuum_iters = 30;
  cfg.discrete_seeds = 1;
  cfg.discrete_iters = 60;
  const SpikeExperimentResult r = run_spike_experiment(cfg, 1, 2);
  CHECK(r.continuum_violations == 0);
  CHECK(r.continuum.size() == 6 * 31);
  CHECK(r.summaries.size() == 1);
  CHECK(r.summaries[0].final_objective < r.summaries[0].initial_objective);
}
