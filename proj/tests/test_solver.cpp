#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "invreg/errors.hpp"
#include "invreg/gaussian.hpp"
#include "invreg/objectives.hpp"
#include "invreg/solver.hpp"
#include "test_support.hpp"

using namespace invreg;

namespace {

// 1/2 |A - A0|^2 + 1/2 |b - b0|^2, optionally failing at a given call.
class Quadratic final : public Objective {
 public:
  Quadratic(Eigen::Matrix2d A0, Eigen::Vector2d b0) : A0_(A0), b0_(b0), x_(1, 1, 1) {}
  Evaluation evaluate(const TransformParams& p, const Image*, bool) const override {
    if (fail_at_ >= 0 && calls_++ == fail_at_) throw NumericDomainError("bad filter");
    Evaluation e;
    e.value = 0.5 * ((p.A - A0_).squaredNorm() + (p.b - b0_).squaredNorm());
    e.gA = p.A - A0_;
    e.gb = p.b - b0_;
    return e;
  }
  Eigen::Vector2d center() const override { return Eigen::Vector2d::Zero(); }
  Image warped(const TransformParams&) const override { return x_; }
  const Image& motif() const override { return x_; }
  const SupportMask& mask() const override { return m_; }
  int fail_at_ = -1;

 private:
  Eigen::Matrix2d A0_;
  Eigen::Vector2d b0_;
  Image x_;
  SupportMask m_;
  mutable int calls_ = 0;
};

RegistrationProblem shifted_problem(std::mt19937_64& rng, double sigma2, const Eigen::Vector2d& shift, int m = 32) {
  const Image big = convolve(testing_support::random_image(m + 40, m + 40, 2, rng), GaussianFilter::isotropic(4.0));
  RegistrationProblem p;
  p.scene = big;
  p.motif = Image(m, m, 2);
  const int a0 = 20 + static_cast<int>(shift(0)), a1 = 20 + static_cast<int>(shift(1));
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) p.motif(i, j, k) = big(i + a0, j + a1, k);
  p.anchor = Eigen::Vector2d(20, 20);
  p.sigma2 = sigma2;
  return p;
}

}  // namespace

TEST_CASE("exact update rules on a quadratic") {
  Eigen::Matrix2d A0;
  A0 << 1.2, 0.3, -0.1, 0.9;
  const Quadratic q(A0, Eigen::Vector2d(2, -1));
  SolverConfig cfg;
  cfg.model = MotionModel::affine;
  cfg.iters = 6;
  cfg.t_A = 0.5;
  cfg.t_b = 0.25;
  const SolveResult r = prox_grad_solve(q, cfg, TransformParams::identity(MotionModel::affine));
  REQUIRE(r.trace.size() == 7);
  for (int k = 0; k <= 6; ++k) {
    const Eigen::Matrix2d expectA = A0 + std::pow(0.5, k) * (Eigen::Matrix2d::Identity() - A0);
    const Eigen::Vector2d expectb = (1.0 - std::pow(0.75, k)) * Eigen::Vector2d(2, -1);
    CHECK((r.trace[k].A - expectA).norm() <= 1e-14);
    CHECK((r.trace[k].b - expectb).norm() <= 1e-14);
  }

  cfg.model = MotionModel::translation;
  const SolveResult t = prox_grad_solve(q, cfg, TransformParams::identity(MotionModel::affine));
  CHECK(t.params.A == Eigen::Matrix2d::Identity());
}

TEST_CASE("zero iterations return the initialization") {
  const Quadratic q(Eigen::Matrix2d::Identity() * 2, Eigen::Vector2d(1, 1));
  SolverConfig cfg;
  cfg.iters = 0;
  TransformParams init = TransformParams::identity(MotionModel::affine);
  init.b = Eigen::Vector2d(0.5, 0.25);
  const SolveResult r = prox_grad_solve(q, cfg, init);
  CHECK(r.losses.size() == 1);
  CHECK(r.losses[0] == doctest::Approx(q.value(init)));
  CHECK(r.params.b == init.b);
}

TEST_CASE("domain errors carry the iteration index") {
  Quadratic q(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero());
  q.fail_at_ = 3;
  SolverConfig cfg;
  cfg.iters = 10;
  try {
    prox_grad_solve(q, cfg, TransformParams::identity(MotionModel::affine));
    FAIL("expected a domain error");
  } catch (const NumericDomainError& e) {
    CHECK(std::string(e.what()).find("iteration 3") != std::string::npos);
  }

  const Quadratic z(Eigen::Matrix2d::Zero(), Eigen::Vector2d::Zero());
  cfg.t_A = 1.0;
  CHECK_THROWS_AS(prox_grad_solve(z, cfg, TransformParams::identity(MotionModel::affine)), NumericDomainError);
  cfg.t_A = -1.0;
  CHECK_THROWS_AS(prox_grad_solve(z, cfg, TransformParams::identity(MotionModel::affine)), ConfigError);
}

TEST_CASE("translation recovery") {
  std::mt19937_64 rng(11);
  const BasicObjective obj(shifted_problem(rng, 9.0, Eigen::Vector2d(4, -3)));
  SolverConfig cfg;
  cfg.model = MotionModel::translation;
  cfg.iters = 300;
  cfg.t_A = 1e-3;
  cfg.t_b = 0.5;
  const SolveResult r = prox_grad_solve(obj, cfg, TransformParams::identity(MotionModel::translation, obj.center()));
  CHECK(std::abs(r.params.b(0) - 4.0) <= 0.1);
  CHECK(std::abs(r.params.b(1) + 3.0) <= 0.1);
}

TEST_CASE("small steps decrease the loss and runs are deterministic") {
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const BasicObjective obj(shifted_problem(rng, 4.0, Eigen::Vector2d(2, 1), 24));
    SolverConfig cfg;
    cfg.model = MotionModel::affine;
    cfg.iters = 40;
    cfg.t_A = 0.5 * 2e-4;
    cfg.t_b = 0.5 * 0.2;
    const TransformParams init = TransformParams::identity(MotionModel::affine, obj.center());
    const SolveResult a = prox_grad_solve(obj, cfg, init);
    CHECK(a.losses.back() <= a.losses.front());
    const SolveResult b = prox_grad_solve(obj, cfg, init);
    CHECK(a.losses == b.losses);
  }
}

TEST_CASE("every iterate satisfies the motion model") {
  std::mt19937_64 rng(5);
  const CostSmoothedObjective obj(shifted_problem(rng, 4.0, Eigen::Vector2d(1, 2), 24));
  for (MotionModel model : {MotionModel::euclidean, MotionModel::similarity, MotionModel::translation}) {
    SolverConfig cfg;
    cfg.model = model;
    cfg.iters = 30;
    cfg.t_A = 1e-4;
    cfg.t_b = 0.1;
    bool ok = true;
    int seen = 0;
    prox_grad_solve(obj, cfg, TransformParams::identity(model, obj.center()), nullptr,
                    [&](int k, const TransformParams& p, const Image*) {
                      ok = ok && p.satisfies_model(1e-10) && k == seen;
                      ++seen;
                      return false;
                    });
    CHECK(ok);
    CHECK(seen == 31);
  }
}

TEST_CASE("observer can stop the run") {
  const Quadratic q(Eigen::Matrix2d::Identity(), Eigen::Vector2d(3, 0));
  SolverConfig cfg;
  cfg.iters = 50;
  cfg.t_b = 0.5;
  const SolveResult r = prox_grad_solve(q, cfg, TransformParams::identity(MotionModel::affine), nullptr,
                                        [](int k, const TransformParams&, const Image*) { return k == 4; });
  CHECK(r.stopped);
  CHECK(r.losses.size() == 5);
}

TEST_CASE("multiscale with one stage equals a plain solve") {
  std::mt19937_64 rng(6);
  const RegistrationProblem prob = shifted_problem(rng, 4.0, Eigen::Vector2d(1, -1), 24);
  SolverConfig cfg;
  cfg.iters = 25;
  cfg.t_A = 1e-4;
  cfg.t_b = 0.1;
  const BasicObjective obj(prob);
  const TransformParams init = TransformParams::identity(MotionModel::affine, obj.center());
  const SolveResult a = prox_grad_solve(obj, cfg, init);
  const SolveResult b = multiscale_solve(
      [&](double s2) {
        RegistrationProblem p = prob;
        p.sigma2 = s2;
        return std::make_unique<BasicObjective>(p);
      },
      {{4.0, 25}}, cfg, init);
  CHECK(a.losses == b.losses);
  CHECK(b.trace.size() == 26);

  const SolveResult c = multiscale_solve(
      [&](double s2) {
        RegistrationProblem p = prob;
        p.sigma2 = s2;
        return std::make_unique<BasicObjective>(p);
      },
      halving_schedule(2.0, 25, 10), cfg, init);
  CHECK(c.trace.size() == 26);
}

TEST_CASE("halving schedule") {
  const auto s = halving_schedule(10.0, 250, 50);
  REQUIRE(s.size() == 5);
  CHECK(s[0].sigma2 == doctest::Approx(100.0));
  CHECK(s[4].sigma2 == doctest::Approx(100.0 / 256.0));
  int total = 0;
  for (const auto& st : s) total += st.iters;
  CHECK(total == 250);
  CHECK(halving_schedule(5.0, 70, 50)[1].iters == 20);
}

TEST_CASE("background warmup only moves the background") {
  std::mt19937_64 rng(7);
  RegistrationProblem prob = shifted_problem(rng, 1.0, Eigen::Vector2d(1, 1), 16);
  const BackgroundObjective obj(prob);
  SolverConfig cfg;
  cfg.iters = 8;
  cfg.beta_warmup = 5;
  cfg.t_A = 1e-4;
  cfg.t_b = 0.05;
  cfg.t_beta = 0.5;
  const TransformParams init = TransformParams::identity(MotionModel::affine, obj.center());
  const SolveResult r = prox_grad_solve(obj, cfg, init);
  for (int k = 0; k <= 5; ++k) CHECK(r.trace[k].b == init.b);
  CHECK(r.trace[6].b != init.b);
  CHECK(r.beta.rows() == obj.canvas_geometry().rows);
  for (int k = 1; k <= 5; ++k) CHECK(r.losses[k] <= r.losses[k - 1] + 1e-12);
}

TEST_CASE("two-phase refinement") {
  std::mt19937_64 rng(8);
  const RegistrationProblem prob = shifted_problem(rng, 4.0, Eigen::Vector2d(0, 0), 20);
  RegistrationProblem fine_prob = prob;
  fine_prob.sigma2 = 1e-2;
  const BasicObjective coarse(prob), fine(fine_prob);
  SolverConfig cc, fc;
  cc.iters = 12;
  fc.iters = 256;
  cc.t_A = fc.t_A = 1e-5;
  cc.t_b = fc.t_b = 0.01;
  const SolveResult r =
      two_phase_refine(coarse, cc, fine, fc, TransformParams::identity(MotionModel::affine, coarse.center()));
  CHECK(r.trace.size() == 12 + 256 + 2);
  // Started at the exact optimum: the fine phase stays there.
  CHECK(r.losses.back() <= r.losses[12] + 1e-12);
}

TEST_CASE("heuristic steps") {
  const StepPair s = heuristic_steps(3.0, 64, 64);
  CHECK(s.t_A == doctest::Approx(0.1 * 12.0 / 4096.0).epsilon(1e-15));
  CHECK(s.t_b == doctest::Approx(0.1 * 6.0 / 64.0).epsilon(1e-15));
  const StepPair d = heuristic_steps(6.0, 64, 64);
  CHECK(d.t_A == doctest::Approx(2 * s.t_A));
  CHECK(d.t_b == doctest::Approx(2 * s.t_b));
  const StepPair tall = heuristic_steps(3.0, 64, 10);
  CHECK(tall.t_A == s.t_A);
  CHECK(tall.t_b == s.t_b);
  CHECK_THROWS_AS(heuristic_steps(0.0, 4, 4), ConfigError);
}
