#include "invreg/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "invreg/errors.hpp"
#include "invreg/interpolation.hpp"
#include "invreg/metrics.hpp"
#include "invreg/op_count.hpp"
#include "invreg/spike_theory.hpp"

namespace invreg {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

void csv_line(std::ostringstream& os, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_cell(cells[i]);
  os << "\r\n";
}

}  // namespace

std::string csv_document(const CsvTable& table, const std::string& config_hash, std::uint64_t seed) {
  std::ostringstream os;
  os << "# config_hash=" << config_hash << " seed=" << seed << "\r\n";
  csv_line(os, table.header);
  for (const auto& row : table.rows) csv_line(os, row);
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << text;
  if (!f) throw ConfigError("write failed for '" + path + "'");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the pair.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  const int workers = std::clamp(jobs, 1, count);
  std::vector<std::exception_ptr> errors(count);
  auto run = [&](int i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (workers == 1) {
    for (int i = 0; i < count; ++i) run(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) run(i);
      });
    for (auto& t : pool) t.join();
  }
  // Lowest index wins so the reported error does not depend on scheduling.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

TexturedTrial textured_trial(const TransformParams& truth, std::uint64_t motif_seed, std::uint64_t clutter_seed,
                             int motif_size, int scene_size) {
  if (motif_size < 8 || scene_size < motif_size) throw ConfigError("textured trial needs scene >= motif >= 8");
  TexturedTrial t;
  t.motif = textured_motif(motif_size, motif_size, motif_seed);
  t.truth = truth.recentered(grid_center(motif_size, motif_size));
  const Image bg = clutter(scene_size, scene_size, clutter_seed);
  t.problem.scene = embed(bg, t.motif.image, t.motif.mask, t.truth);
  t.problem.motif = t.motif.image;
  t.problem.mask = t.motif.mask;
  t.problem.anchor = embed_offset(scene_size, scene_size, motif_size, motif_size);
  return t;
}

namespace {

std::vector<ScaleStage> background_stages(const RegistrationProblem& problem, const BackgroundSchedule& s) {
  return with_energy_steps(halving_schedule(s.sigma_start, s.iters, s.halve_every), problem.motif,
                           problem.effective_mask(), problem.center(), s.eta);
}

SolveResult background_run(const RegistrationProblem& problem, const BackgroundSchedule& s,
                           const std::vector<ScaleStage>& stages, const Observer& observer) {
  SolverConfig cfg;
  cfg.model = s.model;
  cfg.t_beta = s.t_beta;
  cfg.beta_warmup = s.beta_warmup;
  cfg.t_A = stages.front().t_A;
  cfg.t_b = stages.front().t_b;
  const auto factory = [&](double sigma2) {
    RegistrationProblem q = problem;
    q.sigma2 = sigma2;
    return std::make_unique<BackgroundObjective>(std::move(q));
  };
  return multiscale_solve(factory, stages, cfg, TransformParams::identity(s.model, problem.center()), observer);
}

}  // namespace

SolveResult background_register(const RegistrationProblem& problem, const BackgroundSchedule& schedule,
                                const Observer& observer) {
  return background_run(problem, schedule, background_stages(problem, schedule), observer);
}

namespace {

double zncc_or_zero(const Image& warped, const Image& motif, const SupportMask& mask) {
  try {
    return zncc(warped, motif, mask);
  } catch (const NumericDomainError&) {
    return 0.0;
  }
}

}  // namespace

double registration_zncc(const RegistrationProblem& problem, const TransformParams& p) {
  const BasicObjective probe(problem);
  return zncc_or_zero(probe.warped(p), problem.motif, probe.mask());
}

// ---------------------------------------------------------------- basin

BasinResult run_basin(const BasinConfig& cfg, std::uint64_t seed, int jobs) {
  if (cfg.axis != "rotation" && cfg.axis != "scale") throw ConfigError("basin axis must be rotation or scale");
  if (cfg.runs < 1 || cfg.translations.empty() || cfg.axis_values.empty())
    throw ConfigError("basin grid needs at least one cell and one run");
  if (cfg.axis == "scale" && cfg.schedule.model != MotionModel::similarity && cfg.schedule.model != MotionModel::affine)
    throw ConfigError("a scale axis needs the similarity or affine model");
  if (cfg.axis == "rotation" && cfg.schedule.model == MotionModel::translation)
    throw ConfigError("a rotation axis needs a model with rotations");
  for (double v : cfg.axis_values)
    if (cfg.axis == "scale" && !(v > 0.0)) throw ConfigError("basin scales must be positive");

  BasinResult out;
  const int na = static_cast<int>(cfg.axis_values.size());
  const int cells = static_cast<int>(cfg.translations.size()) * na;
  out.runs.resize(static_cast<std::size_t>(cells) * cfg.runs);
  parallel_for(static_cast<int>(out.runs.size()), jobs, [&](int idx) {
    const int cell = idx / cfg.runs, run = idx % cfg.runs;
    const double t = cfg.translations[cell / na], v = cfg.axis_values[cell % na];
    std::mt19937_64 rng(derive_seed(seed, idx));
    const std::uint64_t motif_seed = rng(), clutter_seed = rng();
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int side = static_cast<int>(rng() % 2);
    const double sign = rng() % 2 ? 1.0 : -1.0;
    Eigen::Vector2d b;
    b(side) = sign * t;
    b(1 - side) = t * u(rng);
    TransformParams truth = TransformParams::identity(cfg.schedule.model, grid_center(cfg.motif_size, cfg.motif_size));
    if (cfg.axis == "rotation") {
      truth.A = rotation(rng() % 2 ? v : -v);
    } else {
      truth.A = v * Eigen::Matrix2d::Identity();
    }
    truth.b = b;
    const TexturedTrial trial = textured_trial(truth, motif_seed, clutter_seed, cfg.motif_size, cfg.scene_size);
    const SolveResult r = background_register(trial.problem, cfg.schedule);
    BasinRun& row = out.runs[idx];
    row.cell = cell;
    row.run = run;
    row.translation = t;
    row.axis_value = v;
    row.truth = trial.truth;
    row.zncc = registration_zncc(trial.problem, r.params);
  });
  out.cells.resize(cells);
  for (int c = 0; c < cells; ++c) {
    BasinCell& cell = out.cells[c];
    cell.translation = cfg.translations[c / na];
    cell.axis_value = cfg.axis_values[c % na];
    cell.runs = cfg.runs;
    int ok = 0;
    double acc = 0.0;
    for (int r = 0; r < cfg.runs; ++r) {
      const double z = out.runs[static_cast<std::size_t>(c) * cfg.runs + r].zncc;
      acc += z;
      ok += z >= cfg.success_zncc;
    }
    cell.mean_zncc = acc / cfg.runs;
    cell.success_rate = double(ok) / cfg.runs;
  }
  return out;
}

CsvTable basin_cells_csv(const BasinResult& r) {
  CsvTable t{{"translation", "axis_value", "runs", "mean_zncc", "success_rate"}, {}};
  for (const BasinCell& c : r.cells)
    t.add({fmt(c.translation), fmt(c.axis_value), std::to_string(c.runs), fmt(c.mean_zncc), fmt(c.success_rate)});
  return t;
}

CsvTable basin_runs_csv(const BasinResult& r) {
  CsvTable t{{"cell", "run", "translation", "axis_value", "truth", "zncc"}, {}};
  for (const BasinRun& b : r.runs)
    t.add({std::to_string(b.cell), std::to_string(b.run), fmt(b.translation), fmt(b.axis_value), serialize(b.truth),
           fmt(b.zncc)});
  return t;
}

// ----------------------------------------------------------- complexity

TransformSampler complexity_sampler(MotionModel mode) {
  TransformSampler s;
  s.mode = mode;
  s.max_translation = 5.0;
  s.max_rotation = 0.7853981633974483;
  s.min_scale = 0.8;
  s.max_scale = 1.25;
  return s;
}

ComplexityTrial complexity_trial(const ComplexityConfig& cfg, MotionModel mode, int seed_index, std::uint64_t seed) {
  ComplexityTrial out;
  out.mode = mode;
  out.seed_index = seed_index;
  const std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(mode) * 100000 + seed_index);
  std::mt19937_64 rng(trial_seed);
  const std::uint64_t motif_seed = rng(), clutter_seed = rng();
  const Eigen::Vector2d c = grid_center(cfg.motif_size, cfg.motif_size);
  const TransformSampler sampler = complexity_sampler(mode);
  const TransformParams truth = sample_transform(sampler, rng, c);
  const TexturedTrial trial = textured_trial(truth, motif_seed, clutter_seed, cfg.motif_size, cfg.scene_size);
  const RegistrationProblem& prob = trial.problem;
  const BasicObjective probe(prob);
  const SupportMask& mask = probe.mask();

  // Optimization. Step sizes depend on the motif only and are set up before counting.
  BackgroundSchedule sched;
  sched.model = mode;
  sched.sigma_start = mode == MotionModel::affine ? cfg.sigma_start_affine : cfg.sigma_start;
  sched.iters = cfg.max_iters;
  sched.halve_every = cfg.halve_every;
  sched.eta = cfg.eta;
  const std::vector<ScaleStage> stages = background_stages(prob, sched);
  reset_op_counts();
  const Observer watch = [&](int k, const TransformParams& p, const Image*) {
    const OpCounts saved = op_counts();
    const double z = zncc_or_zero(probe.warped(p), prob.motif, mask);
    op_counts() = saved;
    out.opt_zncc = z;
    out.opt_iterations = k;
    if (z >= cfg.target_zncc) out.opt_converged = true;
    return out.opt_converged;
  };
  background_run(prob, sched, stages, watch);
  out.opt_interpolations = op_counts().interpolations;
  out.opt_convolutions = op_counts().convolutions;
  out.opt_units = op_counts().total();

  // Covering: each draw is one interpolation plus one convolution. A random
  // pixel subset screens out draws whose full ZNCC cannot reach the target.
  std::vector<std::pair<int, int>> support;
  for (int i = 0; i < prob.rows(); ++i)
    for (int j = 0; j < prob.cols(); ++j)
      if (mask.contains(i, j)) support.emplace_back(i, j);
  std::mt19937_64 pick(derive_seed(trial_seed, 1));
  std::shuffle(support.begin(), support.end(), pick);
  const int np = std::min<int>(cfg.prescreen_pixels, static_cast<int>(support.size()));
  const int nc = prob.motif.channels();
  Image sub_motif(1, np, nc);
  for (int s = 0; s < np; ++s)
    for (int k = 0; k < nc; ++k) sub_motif(0, s, k) = prob.motif(support[s].first, support[s].second, k);
  DeformationField sub(1, np);
  std::mt19937_64 draws(derive_seed(trial_seed, 2));
  for (std::int64_t d = 1; d <= cfg.max_draws; ++d) {
    const TransformParams p = sample_transform(sampler, draws, c);
    out.cover_draws = d;
    for (int s = 0; s < np; ++s) {
      const Eigen::Vector2d q(support[s].first, support[s].second);
      const Eigen::Vector2d t = p.apply(q) + prob.anchor;
      sub.t0[s] = t(0);
      sub.t1[s] = t(1);
    }
    const OpCounts saved = op_counts();
    const Image vals = interpolate(prob.scene, sub);
    double zs = -1.0;
    try {
      zs = zncc(vals, sub_motif);
    } catch (const NumericDomainError&) {
    }
    if (zs >= cfg.prescreen_zncc) {
      const double z = zncc_or_zero(probe.warped(p), prob.motif, mask);
      out.cover_zncc = std::max(out.cover_zncc, z);
      if (z >= cfg.target_zncc) out.cover_converged = true;
    }
    op_counts() = saved;
    if (out.cover_converged) break;
  }
  out.cover_units = 2 * out.cover_draws;
  return out;
}

ComplexityResult run_complexity(const ComplexityConfig& cfg, std::uint64_t seed, int jobs) {
  if (cfg.modes.empty() || cfg.seeds < 1) throw ConfigError("complexity run needs modes and seeds");
  if (cfg.max_draws < 1 || cfg.prescreen_pixels < 8) throw ConfigError("covering needs draws and a prescreen set");
  ComplexityResult out;
  const int nm = static_cast<int>(cfg.modes.size());
  out.trials.resize(static_cast<std::size_t>(nm) * cfg.seeds);
  parallel_for(static_cast<int>(out.trials.size()), jobs, [&](int idx) {
    out.trials[idx] = complexity_trial(cfg, cfg.modes[idx / cfg.seeds], idx % cfg.seeds, seed);
  });
  for (int m = 0; m < nm; ++m) {
    ComplexityMode s;
    s.mode = cfg.modes[m];
    std::int64_t iters = 0;
    for (int k = 0; k < cfg.seeds; ++k) {
      const ComplexityTrial& t = out.trials[static_cast<std::size_t>(m) * cfg.seeds + k];
      s.mean_opt_units += double(t.opt_units) / cfg.seeds;
      s.mean_cover_units += double(t.cover_units) / cfg.seeds;
      s.opt_failures += !t.opt_converged;
      s.cover_capped += !t.cover_converged;
      iters += t.opt_iterations;
    }
    s.ratio = s.mean_opt_units / s.mean_cover_units;
    s.units_per_iteration = iters > 0 ? s.mean_opt_units * cfg.seeds / double(iters) : 0.0;
    out.modes.push_back(s);
  }
  return out;
}

CsvTable complexity_modes_csv(const ComplexityResult& r) {
  CsvTable t{{"mode", "dimension", "mean_opt_units", "mean_cover_units", "ratio", "opt_failures", "cover_capped",
              "opt_units_per_iteration"},
             {}};
  for (const ComplexityMode& m : r.modes)
    t.add({to_string(m.mode), std::to_string(param_dim(m.mode)), fmt(m.mean_opt_units), fmt(m.mean_cover_units),
           fmt(m.ratio), std::to_string(m.opt_failures), std::to_string(m.cover_capped),
           fmt(m.units_per_iteration)});
  return t;
}

CsvTable complexity_trials_csv(const ComplexityResult& r) {
  CsvTable t{{"mode", "seed_index", "opt_units", "opt_interpolations", "opt_convolutions", "opt_iterations",
              "opt_zncc", "opt_converged", "cover_draws", "cover_units", "cover_best_zncc", "cover_converged"},
             {}};
  for (const ComplexityTrial& c : r.trials)
    t.add({to_string(c.mode), std::to_string(c.seed_index), std::to_string(c.opt_units),
           std::to_string(c.opt_interpolations), std::to_string(c.opt_convolutions),
           std::to_string(c.opt_iterations), fmt(c.opt_zncc), c.opt_converged ? "1" : "0",
           std::to_string(c.cover_draws), std::to_string(c.cover_units), fmt(c.cover_zncc),
           c.cover_converged ? "1" : "0"});
  return t;
}

// ---------------------------------------------------------------- spike

bool bound_holds(double lhs, double rhs) { return lhs <= rhs * (1.0 + 1e-12) || lhs <= 1e-28; }

DiscreteSummary discrete_spike_run(const SpikeExperimentConfig& cfg, int seed_index, std::uint64_t scene_seed,
                                   std::vector<DiscreteRow>* rows) {
  const SpikeScene sc =
      spike_scene(cfg.sampler, scene_seed, cfg.channels, cfg.rows, cfg.cols, cfg.sigma0,
                  cfg.max_kappa);
  const double s0_2 = cfg.sigma0 * cfg.sigma0;
  const Eigen::Matrix2Xd U = sc.scene_spikes.colwise() - sc.truth.center;
  const double smax = std::max(1.0, Eigen::JacobiSVD<Eigen::Matrix2d>(sc.truth.A).singularValues()(0));
  double sigma2 = cfg.sigma_factor * s0_2 * smax * smax;
  sigma2 = std::max(sigma2, theorem_hyperparams(U, sc.truth.A, sc.truth.b, sigma2).sigma_min2);
  const TheoremHyperparams h = theorem_hyperparams(U, sc.truth.A, sc.truth.b, sigma2);

  RegistrationProblem p;
  p.scene = sc.scene;
  p.motif = sc.motif;
  p.sigma2 = sigma2;
  p.center_point = sc.truth.center;
  const SpikeObjective obj(p, {s0_2, true, true});
  SolverConfig scfg;
  scfg.model = MotionModel::affine;
  scfg.iters = cfg.discrete_iters;
  scfg.t_A = cfg.safety * h.t_A;
  scfg.t_b = cfg.safety * h.t_b;

  DiscreteSummary s;
  s.seed_index = seed_index;
  s.sigma2 = sigma2;
  std::vector<double> nccs;
  const Observer watch = [&](int k, const TransformParams& q, const Image*) {
    const double v = ncc(obj.warped(q), sc.motif);
    nccs.push_back(v);
    if (s.first_k_at_target < 0 && v >= cfg.target_ncc) s.first_k_at_target = k;
    return false;
  };
  const SolveResult r = prox_grad_solve(obj, scfg, TransformParams::identity(MotionModel::affine, sc.truth.center),
                                        nullptr, watch);
  s.final_ncc = nccs.back();
  s.initial_objective = r.losses.front();
  s.final_objective = r.losses.back();
  if (rows)
    for (std::size_t k = 0; k < r.losses.size(); ++k)
      rows->push_back({seed_index, static_cast<int>(k), r.losses[k], nccs[k],
                       (r.trace[k].A - sc.truth.A).squaredNorm() + (r.trace[k].b - sc.truth.b).squaredNorm()});
  return s;
}

SpikeExperimentResult run_spike_experiment(const SpikeExperimentConfig& cfg, std::uint64_t seed, int jobs) {
  if (cfg.continuum_instances < 0 || cfg.discrete_seeds < 0) throw ConfigError("negative instance count");
  if (!(cfg.safety > 0.0)) throw ConfigError("spike step safety factor must be positive");
  SpikeExperimentResult out;
  std::vector<std::vector<ContinuumRow>> cont(cfg.continuum_instances);
  std::vector<int> violations(cfg.continuum_instances, 0);
  parallel_for(cfg.continuum_instances, jobs, [&](int i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    const int c = 3 + i % 6;
    const SpikeInstance inst = random_spike_instance(rng, c);
    for (const TheoremIterate& it : run_theorem_gd(inst, cfg.continuum_iters)) {
      cont[i].push_back({i, c, it.k, it.lhs, it.rhs, it.objective});
      violations[i] += !bound_holds(it.lhs, it.rhs);
    }
  });
  for (int i = 0; i < cfg.continuum_instances; ++i) {
    out.continuum.insert(out.continuum.end(), cont[i].begin(), cont[i].end());
    out.continuum_violations += violations[i];
  }

  std::vector<std::vector<DiscreteRow>> disc(cfg.discrete_seeds);
  out.summaries.resize(cfg.discrete_seeds);
  parallel_for(cfg.discrete_seeds, jobs, [&](int s) {
    out.summaries[s] = discrete_spike_run(cfg, s, seed + static_cast<std::uint64_t>(s), &disc[s]);
  });
  for (auto& d : disc) out.discrete.insert(out.discrete.end(), d.begin(), d.end());
  return out;
}

CsvTable spike_continuum_csv(const SpikeExperimentResult& r) {
  CsvTable t{{"instance", "channels", "k", "lhs", "rhs", "objective", "holds"}, {}};
  for (const ContinuumRow& c : r.continuum)
    t.add({std::to_string(c.instance), std::to_string(c.channels), std::to_string(c.k), fmt(c.lhs), fmt(c.rhs),
           fmt(c.objective), bound_holds(c.lhs, c.rhs) ? "1" : "0"});
  return t;
}

CsvTable spike_discrete_csv(const SpikeExperimentResult& r) {
  CsvTable t{{"seed_index", "k", "objective", "ncc", "lhs"}, {}};
  for (const DiscreteRow& d : r.discrete)
    t.add({std::to_string(d.seed_index), std::to_string(d.k), fmt(d.objective), fmt(d.ncc), fmt(d.lhs)});
  return t;
}

CsvTable spike_summary_csv(const SpikeExperimentResult& r) {
  CsvTable t{{"seed_index", "sigma2", "final_ncc", "first_k_at_target", "initial_objective", "final_objective",
              "decrease_ratio"},
             {}};
  for (const DiscreteSummary& s : r.summaries)
    t.add({std::to_string(s.seed_index), fmt(s.sigma2), fmt(s.final_ncc), std::to_string(s.first_k_at_target),
           fmt(s.initial_objective), fmt(s.final_objective), fmt(s.initial_objective / s.final_objective)});
  return t;
}

// ------------------------------------------------------------- register

Eigen::Matrix2Xd channel_centroids(const Image& image) {
  Eigen::Matrix2Xd out(2, image.channels());
  for (int k = 0; k < image.channels(); ++k) {
    double m = 0.0, r = 0.0, c = 0.0;
    for (int i = 0; i < image.rows(); ++i)
      for (int j = 0; j < image.cols(); ++j) {
        const double v = image(i, j, k);
        if (v < 0.0) throw NumericDomainError("centroids need a nonnegative image");
        m += v;
        r += v * i;
        c += v * j;
      }
    if (!(m > 0.0)) throw NumericDomainError("channel " + std::to_string(k) + " has no mass");
    out.col(k) = Eigen::Vector2d(r / m, c / m);
  }
  return out;
}

RegisterOutcome register_images(const Image& scene, const Image& motif, const SupportMask& mask,
                                const RegisterOptions& opt) {
  RegistrationProblem prob;
  prob.scene = scene;
  prob.motif = motif;
  prob.mask = mask;
  prob.anchor = opt.has_anchor ? opt.anchor : embed_offset(scene.rows(), scene.cols(), motif.rows(), motif.cols());
  prob.validate();
  if (opt.iters < 0) throw ConfigError("iteration count must be nonnegative");
  RegisterOutcome out;

  if (opt.variant == "spike") {
    const Eigen::Matrix2Xd u = channel_centroids(scene);
    const Eigen::Vector2d mean = u.rowwise().mean();
    const Eigen::Matrix2Xd U = u.colwise() - mean;
    double sigma2 = opt.spike_sigma2 > 0.0 ? opt.spike_sigma2 : 2.0 * opt.sigma0_2 * 1.25 * 1.25;
    const TheoremHyperparams h =
        theorem_hyperparams(U, Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero(), sigma2);
    prob.sigma2 = sigma2;
    prob.center_point = mean - prob.anchor;
    const SpikeObjective obj(prob, {opt.sigma0_2, true, true});
    SolverConfig cfg;
    cfg.model = opt.model;
    cfg.iters = opt.iters;
    cfg.t_A = opt.t_A > 0.0 ? opt.t_A : opt.safety * h.t_A;
    cfg.t_b = opt.t_b > 0.0 ? opt.t_b : opt.safety * h.t_b;
    out.result = prox_grad_solve(obj, cfg, TransformParams::identity(opt.model, obj.center()));
    out.similarity = ncc(obj.warped(out.result.params), motif);
    return out;
  }

  ObjectiveFactory factory;
  if (opt.variant == "basic") {
    factory = [&](double s2) {
      RegistrationProblem q = prob;
      q.sigma2 = s2;
      return std::make_unique<BasicObjective>(std::move(q));
    };
  } else if (opt.variant == "cost_smoothed") {
    factory = [&](double s2) {
      RegistrationProblem q = prob;
      q.sigma2 = s2;
      return std::make_unique<CostSmoothedObjective>(std::move(q));
    };
  } else if (opt.variant == "background") {
    factory = [&](double s2) {
      RegistrationProblem q = prob;
      q.sigma2 = s2;
      return std::make_unique<BackgroundObjective>(std::move(q));
    };
  } else {
    throw ConfigError("unknown objective variant '" + opt.variant + "'");
  }
  if (opt.iters == 0) {
    std::vector<ScaleStage> none{{opt.sigma_start * opt.sigma_start, 0}};
    SolverConfig cfg;
    cfg.model = opt.model;
    out.result = multiscale_solve(factory, none, cfg, TransformParams::identity(opt.model, prob.center()));
  } else {
    std::vector<ScaleStage> stages = halving_schedule(opt.sigma_start, opt.iters, opt.halve_every);
    const bool explicit_steps = opt.t_A > 0.0 && opt.t_b > 0.0;
    if (!explicit_steps) stages = with_energy_steps(stages, motif, prob.effective_mask(), prob.center(), opt.eta);
    SolverConfig cfg;
    cfg.model = opt.model;
    cfg.t_beta = opt.t_beta;
    cfg.beta_warmup = opt.variant == "background" ? opt.beta_warmup : 0;
    cfg.t_A = explicit_steps ? opt.t_A : stages.front().t_A;
    cfg.t_b = explicit_steps ? opt.t_b : stages.front().t_b;
    out.result = multiscale_solve(factory, stages, cfg, TransformParams::identity(opt.model, prob.center()));
  }
  out.similarity = registration_zncc(prob, out.result.params);
  return out;
}

}  // namespace invreg
