#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "invreg/errors.hpp"
#include "invreg/objectives.hpp"
#include "invreg/scenegen.hpp"
#include "invreg/transform.hpp"
#include "test_support.hpp"

using namespace invreg;

namespace {

TransformParams random_params(MotionModel model, std::mt19937_64& rng, const Eigen::Vector2d& center) {
  TransformSampler s;
  s.mode = model;
  return sample_transform(s, rng, center);
}

double param_err(const TransformParams& a, const TransformParams& b) {
  return std::max((a.A - b.A).cwiseAbs().maxCoeff(), (a.b - b.b).cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("field_from_params examples") {
  const auto id = field_from_params(TransformParams::identity(MotionModel::affine, grid_center(4, 6)), 4, 6);
  const auto ref = DeformationField::identity(4, 6);
  CHECK(id.t0 == ref.t0);
  CHECK(id.t1 == ref.t1);

  TransformParams t = TransformParams::identity(MotionModel::translation, grid_center(4, 6));
  t.b = Eigen::Vector2d(3, -2);
  const auto ft = field_from_params(t, 4, 6);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) {
      CHECK(ft.t0[i * 6 + j] == doctest::Approx(i + 3));
      CHECK(ft.t1[i * 6 + j] == doctest::Approx(j - 2));
    }

  TransformParams r = TransformParams::identity(MotionModel::euclidean, grid_center(5, 5));
  r.A = rotation(std::numbers::pi / 2);
  const auto fr = field_from_params(r, 5, 5);
  CHECK(fr.t0[0] == doctest::Approx(4.0));
  CHECK(std::abs(fr.t1[0]) < 1e-12);
}

TEST_CASE("centered basis fields are mutually orthogonal") {
  for (auto [m, n] : {std::pair{5, 5}, std::pair{7, 12}, std::pair{64, 48}}) {
    const auto basis = centered_basis(m, n);
    for (int a = 0; a < 6; ++a)
      for (int b = a + 1; b < 6; ++b) {
        double ip = 0.0;
        for (std::size_t i = 0; i < basis[a].size(); ++i)
          ip += basis[a].t0[i] * basis[b].t0[i] + basis[a].t1[i] * basis[b].t1[i];
        CHECK(std::abs(ip) <= 1e-9);
      }
  }
}

TEST_CASE("projection round trip and idempotence for every model") {
  std::mt19937_64 rng(17);
  for (MotionModel model : {MotionModel::translation, MotionModel::euclidean, MotionModel::similarity,
                            MotionModel::affine}) {
    double worst = 0.0, worst_idem = 0.0;
    for (int t = 0; t < 100; ++t) {
      const TransformParams p = random_params(model, rng, grid_center(23, 31));
      const auto field = field_from_params(p, 23, 31);
      const TransformParams q = project_field(field, model);
      worst = std::max(worst, param_err(p, q));
      CHECK(q.satisfies_model(1e-10));
      const TransformParams q2 = project_field(field_from_params(q, 23, 31), model);
      worst_idem = std::max(worst_idem, param_err(q, q2));
    }
    CHECK(worst <= 1e-10);
    CHECK(worst_idem <= 1e-10);
  }
  const TransformParams id = project_field(DeformationField::identity(10, 13), MotionModel::affine);
  CHECK((id.A - Eigen::Matrix2d::Identity()).norm() <= 1e-12);
  CHECK(id.b.norm() <= 1e-12);
}

TEST_CASE("projection of a perturbed field lands in the model") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (MotionModel model : {MotionModel::euclidean, MotionModel::similarity}) {
    for (int t = 0; t < 20; ++t) {
      auto f = field_from_params(random_params(MotionModel::affine, rng, grid_center(15, 15)), 15, 15);
      for (auto& v : f.t0) v += noise(rng);
      const TransformParams q = project_field(f, model);
      CHECK(q.satisfies_model(1e-10));
      const TransformParams q2 = project_field(field_from_params(q, 15, 15), model);
      CHECK(param_err(q, q2) <= 1e-10);
    }
  }
}

TEST_CASE("anchored geometry round trip") {
  std::mt19937_64 rng(23);
  const FieldGeometry geo{12, 9, {-3.0, -3.0}, {40.0, 17.0}};
  for (int t = 0; t < 20; ++t) {
    TransformParams p = random_params(MotionModel::affine, rng, Eigen::Vector2d(2.5, 1.0));
    const TransformParams q = project_field(field_from_params(p, geo), MotionModel::affine, geo, p.center);
    CHECK(param_err(p, q) <= 1e-10);
  }
}

TEST_CASE("so2 chain rule") {
  Eigen::Matrix2d g;
  g << 0, -1, 1, 0;
  CHECK(so2_grad(g, 0.0) == doctest::Approx(2.0));
  CHECK(so2_grad(Eigen::Matrix2d::Zero(), 0.7) == 0.0);

  std::mt19937_64 rng(31);
  RegistrationProblem prob;
  prob.scene = testing_support::random_image(30, 30, 1, rng);
  prob.scene = convolve(prob.scene, GaussianFilter::isotropic(2.0));
  prob.motif = testing_support::random_image(14, 14, 1, rng);
  prob.sigma2 = 1.0;
  prob.anchor = Eigen::Vector2d(8, 8);
  const BasicObjective obj(prob);
  for (double theta : {-0.4, 0.1, 0.9}) {
    auto phi = [&](double th) {
      TransformParams p = TransformParams::identity(MotionModel::euclidean, obj.center());
      p.A = rotation(th);
      p.b = Eigen::Vector2d(0.3, -0.2);
      return obj.value(p);
    };
    TransformParams p = TransformParams::identity(MotionModel::euclidean, obj.center());
    p.A = rotation(theta);
    p.b = Eigen::Vector2d(0.3, -0.2);
    const double an = so2_grad(obj.evaluate(p, nullptr, true).gA, theta);
    const double fd = (phi(theta + 1e-4) - phi(theta - 1e-4)) / 2e-4;
    CHECK(testing_support::rel_err(an, fd) <= 1e-3);
  }
}

TEST_CASE("inverse parameterization gradients") {
  Eigen::Matrix2d gA;
  gA << 1, 2, 3, 4;
  const Eigen::Vector2d gb(5, -6);
  const auto [a0, b0] = inverse_param_grads(gA, gb, Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero());
  CHECK((a0 + gA).norm() <= 1e-14);
  CHECK((b0 + gb).norm() <= 1e-14);
  const auto [a1, b1] = inverse_param_grads(Eigen::Matrix2d::Zero(), Eigen::Vector2d::Zero(), gA, gb);
  CHECK(a1.norm() == 0.0);
  CHECK(b1.norm() == 0.0);
  CHECK_THROWS_AS(inverse_param_grads(gA, gb, Eigen::Matrix2d::Zero(), gb), NumericDomainError);

  // phi(A, b) = sum c_ij sin(A_ij) + d . b^3 with its closed-form gradient.
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    Eigen::Matrix2d C, A;
    C << u(rng), u(rng), u(rng), u(rng);
    A = Eigen::Matrix2d::Identity() + 0.3 * Eigen::Matrix2d::NullaryExpr([&] { return u(rng); });
    const Eigen::Vector2d d(u(rng), u(rng)), b(u(rng), u(rng));
    auto phi = [&](const Eigen::Matrix2d& X, const Eigen::Vector2d& y) {
      return (C.array() * X.array().sin()).sum() + (d.array() * y.array().cube()).sum();
    };
    auto composed = [&](const Eigen::Matrix2d& X, const Eigen::Vector2d& y) {
      const Eigen::Matrix2d Xi = X.inverse();
      return phi(Xi, -Xi * y);
    };
    const Eigen::Matrix2d Ai = A.inverse();
    const Eigen::Vector2d bi = -Ai * b;
    const Eigen::Matrix2d gstdA = (C.array() * Ai.array().cos()).matrix();
    const Eigen::Vector2d gstdb = (3.0 * d.array() * bi.array().square()).matrix();
    const auto [ga, gbb] = inverse_param_grads(gstdA, gstdb, A, b);
    const double ea = testing_support::grad_check<Eigen::Matrix2d>(
        [&](const Eigen::Matrix2d& X) { return composed(X, b); }, A, ga);
    const double eb = testing_support::grad_check<Eigen::Vector2d>(
        [&](const Eigen::Vector2d& y) { return composed(A, y); }, b, gbb);
    CHECK(ea <= 1e-3);
    CHECK(eb <= 1e-3);
  }
}

TEST_CASE("params text serialization") {
  TransformParams p = TransformParams::identity(MotionModel::similarity, Eigen::Vector2d(3.5, 4.5));
  p.A = 1.1 * rotation(0.3);
  p.b = Eigen::Vector2d(-1.25, 2.0);
  const TransformParams q = parse_params(serialize(p));
  CHECK(q.model == p.model);
  CHECK((q.A - p.A).norm() == 0.0);
  CHECK((q.b - p.b).norm() == 0.0);
  CHECK((q.center - p.center).norm() == 0.0);
  CHECK_THROWS_AS(parse_params("affine 1 2"), ConfigError);
  CHECK_THROWS_AS(parse_motion_model("homography"), ConfigError);
}

TEST_CASE("recentering preserves the map") {
  std::mt19937_64 rng(3);
  const TransformParams p = random_params(MotionModel::affine, rng, Eigen::Vector2d(1, 2));
  const TransformParams q = p.recentered(Eigen::Vector2d(-4, 7));
  for (const Eigen::Vector2d x : {Eigen::Vector2d(0, 0), Eigen::Vector2d(3, -5)})
    CHECK((p.apply(x) - q.apply(x)).norm() <= 1e-12);
}
