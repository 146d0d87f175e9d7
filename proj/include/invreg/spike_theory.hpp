#pragma once

#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace invreg {

/// Continuum multichannel spike pair: observed locations u_i (columns of U),
/// targets v_i = A* u_i + b*, and the smoothing scale sigma.
struct SpikeInstance {
  Eigen::Matrix2Xd U;
  Eigen::Matrix2d A_star = Eigen::Matrix2d::Identity();
  Eigen::Vector2d b_star = Eigen::Vector2d::Zero();
  Eigen::Matrix2Xd V;
  double sigma = 1.0;

  /// Validates centering and rank; throws ConfigError otherwise.
  static SpikeInstance make(Eigen::Matrix2Xd U, const Eigen::Matrix2d& A_star, const Eigen::Vector2d& b_star,
                            double sigma);
  int channels() const { return static_cast<int>(U.cols()); }
};

/// (1 / (4 pi sigma^2)) (1 - exp(-s / (2 sigma^2))).
double psi(double s, double sigma);
/// d psi / ds = exp(-s / (2 sigma^2)) / (8 pi sigma^4).
double psi_dot(double s, double sigma);

double continuum_objective(const Eigen::Matrix2d& A, const Eigen::Vector2d& b, const SpikeInstance& inst);
std::pair<Eigen::Matrix2d, Eigen::Vector2d> continuum_grads(const Eigen::Matrix2d& A, const Eigen::Vector2d& b,
                                                           const SpikeInstance& inst);

struct TheoremHyperparams {
  double sigma_min2 = 0.0;
  double t_A = 0.0;
  double t_b = 0.0;
  double kappa = 1.0;
};

/// Smoothing lower bound, step sizes (at inst.sigma) and condition number.
TheoremHyperparams theorem_hyperparams(const SpikeInstance& inst);

/// Same quantities from bare spike coordinates and truth; sigma2 selects the
/// scale the step sizes are evaluated at.
TheoremHyperparams theorem_hyperparams(const Eigen::Matrix2Xd& U, const Eigen::Matrix2d& A_star,
                                       const Eigen::Vector2d& b_star, double sigma2);

struct TheoremIterate {
  int k = 0;
  Eigen::Matrix2d A;
  Eigen::Vector2d b;
  double lhs = 0.0;
  double rhs = 0.0;
  double objective = 0.0;
};

/// Gradient descent from (I, 0) with the theorem's steps; iters + 1 rows.
/// Throws ConfigError when sigma^2 is below the bound.
std::vector<TheoremIterate> run_theorem_gd(const SpikeInstance& inst, int iters);

/// Standard-normal columns, centered, rank checked; A* = I + perturbation with
/// Frobenius norm <= 0.3, |b*| <= 0.5, sigma = sqrt(2 sigma_min^2) (1 when zero).
SpikeInstance random_spike_instance(std::mt19937_64& rng, int channels);

}  // namespace invreg
