#include "invreg/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <Eigen/LU>

#include "invreg/errors.hpp"
#include "invreg/gaussian.hpp"
#include "invreg/interpolation.hpp"

namespace invreg {

namespace {

Evaluation evaluate_at(const Objective& obj, const TransformParams& p, const Image* beta, bool grad, int k) {
  try {
    return obj.evaluate(p, beta, grad);
  } catch (const NumericDomainError& e) {
    throw NumericDomainError("iteration " + std::to_string(k) + ": " + e.what());
  }
}

void step_params(TransformParams& p, const Evaluation& e, const SolverConfig& cfg, int k, int& reflections) {
  switch (cfg.model) {
    case MotionModel::translation:
      p.A.setIdentity();
      break;
    case MotionModel::euclidean: {
      const double theta = p.theta() - 0.5 * cfg.t_A * so2_grad(e.gA, p.theta());
      p.A = rotation(theta);
      break;
    }
    case MotionModel::similarity: {
      bool reflected = false;
      p.A = project_linear(p.A - cfg.t_A * e.gA, MotionModel::similarity, &reflected);
      if (reflected) ++reflections;
      break;
    }
    case MotionModel::affine: {
      p.A -= cfg.t_A * e.gA;
      const double det = p.A.determinant();
      if (!(std::abs(det) > 1e-12) || !p.A.allFinite()) {
        std::ostringstream os;
        os << "iteration " << k << ": affine iterate became singular (det " << det << ")";
        throw NumericDomainError(os.str());
      }
      break;
    }
  }
  p.b -= cfg.t_b * e.gb;
  if (!p.b.allFinite()) throw NumericDomainError("iteration " + std::to_string(k) + ": translation diverged");
}

SolveResult solve_impl(const Objective& obj, const SolverConfig& cfg, const TransformParams& init, const Image* beta_init,
                       const Observer& observer, int k_offset, bool record_init) {
  if (cfg.iters < 0) throw ConfigError("iteration count must be nonnegative");
  if (!(cfg.t_A > 0.0) || !(cfg.t_b > 0.0)) throw ConfigError("step sizes must be positive");
  SolveResult r;
  r.params = init;
  r.params.model = cfg.model;
  if (cfg.model == MotionModel::translation) r.params.A.setIdentity();
  if (obj.has_background()) r.beta = beta_init ? obj.regrid_background(*beta_init) : obj.initial_background(r.params);
  const Image* beta = obj.has_background() ? &r.beta : nullptr;

  Evaluation e = evaluate_at(obj, r.params, beta, cfg.iters > 0, k_offset);
  if (record_init) {
    r.losses.push_back(e.value);
    r.trace.push_back(r.params);
  }
  if (observer && observer(k_offset, r.params, beta)) {
    r.stopped = true;
    return r;
  }
  for (int t = 0; t < cfg.iters; ++t) {
    const int k = k_offset + t + 1;
    if (obj.has_background()) {
      r.beta -= cfg.t_beta * e.gbeta;
    }
    if (!obj.has_background() || t >= cfg.beta_warmup) step_params(r.params, e, cfg, k, r.reflections);
    const bool more = t + 1 < cfg.iters;
    e = evaluate_at(obj, r.params, beta, more, k);
    r.losses.push_back(e.value);
    r.trace.push_back(r.params);
    if (observer && observer(k, r.params, beta)) {
      r.stopped = true;
      return r;
    }
  }
  return r;
}

}  // namespace

SolveResult prox_grad_solve(const Objective& objective, const SolverConfig& cfg, const TransformParams& init,
                            const Image* beta_init, const Observer& observer) {
  return solve_impl(objective, cfg, init, beta_init, observer, 0, true);
}

std::vector<ScaleStage> halving_schedule(double sigma_start, int total_iters, int every) {
  if (!(sigma_start > 0.0) || every <= 0 || total_iters < 0) throw ConfigError("bad halving schedule");
  std::vector<ScaleStage> out;
  double sigma = sigma_start;
  for (int done = 0; done < total_iters; done += every) {
    out.push_back({sigma * sigma, std::min(every, total_iters - done)});
    sigma *= 0.5;
  }
  if (out.empty()) out.push_back({sigma_start * sigma_start, 0});
  return out;
}

SolveResult multiscale_solve(const ObjectiveFactory& factory, const std::vector<ScaleStage>& schedule,
                             const SolverConfig& cfg, const TransformParams& init, const Observer& observer) {
  if (schedule.empty()) throw ConfigError("empty smoothing schedule");
  SolveResult total;
  TransformParams p = init;
  Image beta;
  bool have_beta = false;
  int k = 0;
  const double sigma0 = std::sqrt(schedule.front().sigma2);
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    auto obj = factory(schedule[s].sigma2);
    SolverConfig stage = cfg;
    const double ratio = std::sqrt(schedule[s].sigma2) / sigma0;
    stage.t_A = schedule[s].t_A > 0.0 ? schedule[s].t_A : stage.t_A * ratio;
    stage.t_b = schedule[s].t_b > 0.0 ? schedule[s].t_b : stage.t_b * ratio;
    stage.iters = schedule[s].iters;
    SolveResult r = solve_impl(*obj, stage, p, have_beta ? &beta : nullptr, observer, k, s == 0);
    total.losses.insert(total.losses.end(), r.losses.begin(), r.losses.end());
    total.trace.insert(total.trace.end(), r.trace.begin(), r.trace.end());
    total.reflections += r.reflections;
    p = r.params;
    if (obj->has_background()) {
      beta = std::move(r.beta);
      have_beta = true;
    }
    k += stage.iters;
    if (r.stopped) {
      total.stopped = true;
      break;
    }
  }
  total.params = p;
  total.beta = std::move(beta);
  return total;
}

SolveResult two_phase_refine(const Objective& coarse, const SolverConfig& coarse_cfg, const Objective& fine,
                             const SolverConfig& fine_cfg, const TransformParams& init) {
  SolveResult a = prox_grad_solve(coarse, coarse_cfg, init);
  SolveResult b = prox_grad_solve(fine, fine_cfg, a.params, a.beta.empty() ? nullptr : &a.beta);
  SolveResult out = b;
  out.losses = a.losses;
  out.losses.insert(out.losses.end(), b.losses.begin(), b.losses.end());
  out.trace = a.trace;
  out.trace.insert(out.trace.end(), b.trace.begin(), b.trace.end());
  out.reflections = a.reflections + b.reflections;
  return out;
}

StepPair heuristic_steps(double sigma, int rows, int cols) {
  if (!(sigma > 0.0)) throw ConfigError("heuristic steps need sigma > 0");
  const double mx = std::max(rows, cols);
  return {0.1 * 4.0 * sigma / (mx * mx), 0.1 * 2.0 * sigma / mx};
}

StepPair energy_steps(const Image& motif, const SupportMask& mask, const Eigen::Vector2d& center, double sigma2,
                      double eta) {
  if (!(eta > 0.0)) throw ConfigError("step scale must be positive");
  const SupportMask m = mask.rows() == 0 ? SupportMask(motif.rows(), motif.cols(), true) : mask;
  const Image smooth = convolve(m.project(motif), GaussianFilter::isotropic(sigma2));
  const ImageJacobian J = jacobian(smooth);
  double lb = 0.0, lt = 0.0;
  for (int k = 0; k < motif.channels(); ++k)
    for (int i = 0; i < motif.rows(); ++i)
      for (int j = 0; j < motif.cols(); ++j) {
        if (!m.contains(i, j)) continue;
        const double a = J.d0(i, j, k), b = J.d1(i, j, k);
        const double t = b * (i - center(0)) - a * (j - center(1));
        lb += a * a + b * b;
        lt += t * t;
      }
  lb *= 0.5;
  if (!(lb > 0.0) || !(lt > 0.0)) throw NumericDomainError("motif has no gradient energy on its mask");
  return {2.0 * eta / lt, eta / lb};
}

std::vector<ScaleStage> with_energy_steps(std::vector<ScaleStage> schedule, const Image& motif,
                                          const SupportMask& mask, const Eigen::Vector2d& center, double eta) {
  for (ScaleStage& s : schedule) {
    const StepPair st = energy_steps(motif, mask, center, s.sigma2, eta);
    s.t_A = st.t_A;
    s.t_b = st.t_b;
  }
  return schedule;
}

std::string trace_csv(const SolveResult& r) {
  std::ostringstream os;
  os << "iteration,loss,params\n" << std::setprecision(12);
  for (std::size_t i = 0; i < r.losses.size(); ++i) os << i << ',' << r.losses[i] << ',' << serialize(r.trace[i]) << '\n';
  return os.str();
}

}  // namespace invreg
