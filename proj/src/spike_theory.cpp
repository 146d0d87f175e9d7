#include "invreg/spike_theory.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "invreg/errors.hpp"

namespace invreg {

namespace {

std::pair<double, double> extreme_singular_values(const Eigen::Matrix2Xd& U) {
  // det(U U^T) by Cauchy-Binet keeps s_min accurate for ill-conditioned U.
  double det = 0.0;
  for (Eigen::Index i = 0; i < U.cols(); ++i)
    for (Eigen::Index j = i + 1; j < U.cols(); ++j) {
      const double cross = U(0, i) * U(1, j) - U(1, i) * U(0, j);
      det += cross * cross;
    }
  const double fro = U.squaredNorm();
  const double smax2 = 0.5 * (fro + std::sqrt(std::max(0.0, fro * fro - 4.0 * det)));
  if (!(smax2 > 0.0)) return {0.0, 0.0};
  return {std::sqrt(det / smax2), std::sqrt(smax2)};
}

}  // namespace

SpikeInstance SpikeInstance::make(Eigen::Matrix2Xd U, const Eigen::Matrix2d& A_star, const Eigen::Vector2d& b_star,
                                  double sigma) {
  if (U.cols() < 2) throw ConfigError("spike instance needs at least two spikes");
  if (!(sigma > 0.0)) throw ConfigError("spike instance sigma must be positive");
  const double scale = std::max(1.0, U.cwiseAbs().maxCoeff());
  if (U.rowwise().sum().norm() > 1e-9 * scale * U.cols()) throw ConfigError("spike locations are not centered");
  const auto [smin, smax] = extreme_singular_values(U);
  if (!(smin > 1e-9 * smax)) throw ConfigError("spike locations are rank deficient");
  if (std::abs(A_star.determinant()) < 1e-12) throw ConfigError("spike truth A* is singular");
  SpikeInstance inst;
  inst.U = std::move(U);
  inst.A_star = A_star;
  inst.b_star = b_star;
  inst.V = (A_star * inst.U).colwise() + b_star;
  inst.sigma = sigma;
  return inst;
}

double psi(double s, double sigma) {
  const double s2 = sigma * sigma;
  return -std::expm1(-s / (2.0 * s2)) / (4.0 * std::numbers::pi * s2);
}

double psi_dot(double s, double sigma) {
  const double s2 = sigma * sigma;
  return std::exp(-s / (2.0 * s2)) / (8.0 * std::numbers::pi * s2 * s2);
}

double continuum_objective(const Eigen::Matrix2d& A, const Eigen::Vector2d& b, const SpikeInstance& inst) {
  double acc = 0.0;
  for (int i = 0; i < inst.channels(); ++i) {
    const Eigen::Vector2d d = A * inst.U.col(i) + b - inst.V.col(i);
    acc += psi(0.5 * d.squaredNorm(), inst.sigma);
  }
  return acc / inst.channels();
}

std::pair<Eigen::Matrix2d, Eigen::Vector2d> continuum_grads(const Eigen::Matrix2d& A, const Eigen::Vector2d& b,
                                                           const SpikeInstance& inst) {
  Eigen::Matrix2d gA = Eigen::Matrix2d::Zero();
  Eigen::Vector2d gb = Eigen::Vector2d::Zero();
  for (int i = 0; i < inst.channels(); ++i) {
    const Eigen::Vector2d d = A * inst.U.col(i) + b - inst.V.col(i);
    const double w = psi_dot(0.5 * d.squaredNorm(), inst.sigma);
    gA += w * d * inst.U.col(i).transpose();
    gb += w * d;
  }
  const double c = inst.channels();
  return {gA / c, gb / c};
}

TheoremHyperparams theorem_hyperparams(const Eigen::Matrix2Xd& U, const Eigen::Matrix2d& A_star,
                                       const Eigen::Vector2d& b_star, double sigma2) {
  const auto [smin, smax] = extreme_singular_values(U);
  if (!(smin > 1e-12)) throw ConfigError("spike locations are rank deficient");
  const double c = U.cols();
  const double umax2 = U.colwise().squaredNorm().maxCoeff();
  TheoremHyperparams h;
  h.sigma_min2 = 2.0 * (umax2 / (smin * smin)) *
                 (smax * smax * (A_star - Eigen::Matrix2d::Identity()).squaredNorm() + c * b_star.squaredNorm());
  const double s4 = sigma2 * sigma2;
  h.t_A = 8.0 * std::numbers::pi * c * s4 / (smax * smax);
  h.t_b = 8.0 * std::numbers::pi * s4;
  h.kappa = (smax * smax) / (smin * smin);
  return h;
}

TheoremHyperparams theorem_hyperparams(const SpikeInstance& inst) {
  return theorem_hyperparams(inst.U, inst.A_star, inst.b_star, inst.sigma * inst.sigma);
}

std::vector<TheoremIterate> run_theorem_gd(const SpikeInstance& inst, int iters) {
  const TheoremHyperparams h = theorem_hyperparams(inst);
  const double s2 = inst.sigma * inst.sigma;
  if (s2 < h.sigma_min2) throw ConfigError("smoothing below the theorem bound");
  const double wA = 8.0 * std::numbers::pi * s2 * s2 / h.t_A;
  const double rate = 1.0 - 1.0 / (2.0 * h.kappa);
  Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  const double lhs0 = wA * (A - inst.A_star).squaredNorm() + (b - inst.b_star).squaredNorm();
  std::vector<TheoremIterate> trace;
  trace.reserve(iters + 1);
  for (int k = 0; k <= iters; ++k) {
    TheoremIterate it;
    it.k = k;
    it.A = A;
    it.b = b;
    it.lhs = wA * (A - inst.A_star).squaredNorm() + (b - inst.b_star).squaredNorm();
    it.rhs = std::pow(rate, 2.0 * k) * lhs0;
    it.objective = continuum_objective(A, b, inst);
    trace.push_back(it);
    if (k == iters) break;
    const auto [gA, gb] = continuum_grads(A, b, inst);
    A -= h.t_A * gA;
    b -= h.t_b * gb;
  }
  return trace;
}

SpikeInstance random_spike_instance(std::mt19937_64& rng, int channels) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::Matrix2Xd U(2, channels);
  for (;;) {
    for (int i = 0; i < channels; ++i) U.col(i) = Eigen::Vector2d(normal(rng), normal(rng));
    U.colwise() -= U.rowwise().mean();
    const auto [smin, smax] = extreme_singular_values(U);
    if (smin > 1e-3 * smax) break;
  }
  Eigen::Matrix2d P;
  P << normal(rng), normal(rng), normal(rng), normal(rng);
  const Eigen::Matrix2d A_star = Eigen::Matrix2d::Identity() + (0.3 * unit(rng) / P.norm()) * P;
  Eigen::Vector2d dir(normal(rng), normal(rng));
  const Eigen::Vector2d b_star = (0.5 * unit(rng) / dir.norm()) * dir;
  const double smin2 = theorem_hyperparams(U, A_star, b_star, 1.0).sigma_min2;
  const double sigma = smin2 > 0.0 ? std::sqrt(2.0 * smin2) : 1.0;
  return SpikeInstance::make(std::move(U), A_star, b_star, sigma);
}

}  // namespace invreg
