#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "invreg/objectives.hpp"
#include "invreg/transform.hpp"

namespace invreg {

struct SolverConfig {
  MotionModel model = MotionModel::affine;
  int iters = 100;
  double t_A = 1e-3;
  double t_b = 1e-2;
  double t_beta = 1.0;
  /// Background-only iterations at the start of each scale (counted in iters).
  int beta_warmup = 5;
};

struct SolveResult {
  TransformParams params;
  Image beta;
  std::vector<double> losses;          // one per iterate, initialization included
  std::vector<TransformParams> trace;  // same length as losses
  int reflections = 0;                 // euclidean/similarity projections that hit det < 0
  bool stopped = false;                // an observer ended the run early
};

/// Called after the initial iterate and after every update with the global
/// iterate index; returning true ends the run.
using Observer = std::function<bool(int k, const TransformParams& p, const Image* beta)>;

/// Projected gradient descent with decoupled steps on A and b. Euclidean
/// iterates move along the rotation angle, similarity and translation iterates
/// are projected after an unconstrained step.
SolveResult prox_grad_solve(const Objective& objective, const SolverConfig& cfg, const TransformParams& init,
                            const Image* beta_init = nullptr, const Observer& observer = {});

struct ScaleStage {
  double sigma2 = 1.0;
  int iters = 0;
  /// Per-stage steps; zero means the first-stage steps scaled by sigma.
  double t_A = 0.0;
  double t_b = 0.0;
};

/// sigma starts at sigma_start and halves every `every` iterations.
std::vector<ScaleStage> halving_schedule(double sigma_start, int total_iters, int every);

using ObjectiveFactory = std::function<std::unique_ptr<Objective>(double sigma2)>;

/// Chains prox_grad_solve over the stages, warm starting each at the previous
/// result. cfg's steps apply at the first stage and scale with sigma after.
/// The loss trace has 1 + sum(iters) entries.
SolveResult multiscale_solve(const ObjectiveFactory& factory, const std::vector<ScaleStage>& schedule,
                             const SolverConfig& cfg, const TransformParams& init, const Observer& observer = {});

/// Coarse solve, then a fine solve started at its result. The returned trace
/// concatenates both runs (coarse T + 1 then fine T + 1 entries).
SolveResult two_phase_refine(const Objective& coarse, const SolverConfig& coarse_cfg, const Objective& fine,
                             const SolverConfig& fine_cfg, const TransformParams& init);

struct StepPair {
  double t_A = 0.0;
  double t_b = 0.0;
};

/// t_A = 0.1 * 4 sigma / max(m^2, n^2), t_b = 0.1 * 2 sigma / max(m, n).
StepPair heuristic_steps(double sigma, int rows, int cols);

/// Steps normalized by the smoothed motif's gradient energy on the mask:
/// t_b = eta / L_b and t_A = 2 eta / L_theta, where L_b = 1/2 sum |grad(g * x)|^2
/// and L_theta = sum <grad(g * x), J (p - c)>^2 with J the quarter turn.
StepPair energy_steps(const Image& motif, const SupportMask& mask, const Eigen::Vector2d& center, double sigma2,
                      double eta);

/// Fills in energy_steps for every stage of a schedule.
std::vector<ScaleStage> with_energy_steps(std::vector<ScaleStage> schedule, const Image& motif,
                                          const SupportMask& mask, const Eigen::Vector2d& center, double eta);

/// CSV rows "iteration,loss,params".
std::string trace_csv(const SolveResult& r);

}  // namespace invreg
