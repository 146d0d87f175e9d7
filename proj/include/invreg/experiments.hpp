#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "invreg/objectives.hpp"
#include "invreg/scenegen.hpp"
#include "invreg/solver.hpp"

namespace invreg {

/// Header plus rows of already formatted cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

/// "%.12g", with "nan"/"inf" spelled out.
std::string fmt(double v);

/// RFC-4180 body preceded by "# config_hash=<hash> seed=<seed>".
std::string csv_document(const CsvTable& table, const std::string& config_hash, std::uint64_t seed);
void write_text(const std::string& path, const std::string& text);

/// Seed for the index-th job of a run, independent of scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Runs fn(0..count-1) on up to `jobs` threads. The first exception thrown by
/// any job is rethrown after all threads finish.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

/// Textured motif embedded in clutter by a known transform about the motif center.
struct TexturedTrial {
  TexturedMotif motif;
  TransformParams truth;
  RegistrationProblem problem;  // scene, motif, mask, anchor at the embed offset
};

TexturedTrial textured_trial(const TransformParams& truth, std::uint64_t motif_seed, std::uint64_t clutter_seed,
                             int motif_size = 64, int scene_size = 256);

/// Multiscale background-modeled registration settings.
struct BackgroundSchedule {
  MotionModel model = MotionModel::euclidean;
  double sigma_start = 10.0;
  int iters = 250;
  int halve_every = 50;
  /// Step scale for the energy-normalized steps.
  double eta = 0.5;
  double t_beta = 1.0;
  int beta_warmup = 5;
};

SolveResult background_register(const RegistrationProblem& problem, const BackgroundSchedule& schedule,
                                const Observer& observer = {});

/// ZNCC between the scene warped by p and the motif on the motif support; 0
/// when the warped scene is constant there (e.g. it left the frame).
double registration_zncc(const RegistrationProblem& problem, const TransformParams& p);

// ---------------------------------------------------------------- basin

struct BasinConfig {
  /// "rotation" or "scale" for the second grid axis.
  std::string axis = "rotation";
  std::vector<double> translations{0, 4, 8};
  std::vector<double> axis_values{0, 0.1309, 0.2618};
  int runs = 10;
  int motif_size = 64;
  int scene_size = 256;
  double success_zncc = 0.9;
  BackgroundSchedule schedule;
};

struct BasinRun {
  int cell = 0;
  int run = 0;
  double translation = 0.0;
  double axis_value = 0.0;
  TransformParams truth;
  double zncc = 0.0;
};

struct BasinCell {
  double translation = 0.0;
  double axis_value = 0.0;
  int runs = 0;
  double mean_zncc = 0.0;
  double success_rate = 0.0;
};

struct BasinResult {
  std::vector<BasinRun> runs;
  std::vector<BasinCell> cells;  // translation-major
};

/// Run r of a cell uses translation t along a seeded random direction on the
/// infinity-norm sphere and axis value +/- v with a seeded sign.
BasinResult run_basin(const BasinConfig& cfg, std::uint64_t seed, int jobs = 1);
CsvTable basin_cells_csv(const BasinResult& r);
CsvTable basin_runs_csv(const BasinResult& r);

// ----------------------------------------------------------- complexity

struct ComplexityConfig {
  std::vector<MotionModel> modes{MotionModel::translation, MotionModel::euclidean, MotionModel::similarity,
                                 MotionModel::affine};
  int seeds = 10;
  int motif_size = 64;
  int scene_size = 256;
  double target_zncc = 0.9;
  /// Optimization: sigma start per mode (affine uses its own), iteration cap.
  double sigma_start = 5.0;
  double sigma_start_affine = 10.0;
  int max_iters = 400;
  int halve_every = 50;
  double eta = 0.5;
  /// Covering: draw cap and prescreen settings.
  std::int64_t max_draws = 1000000;
  int prescreen_pixels = 128;
  double prescreen_zncc = 0.5;
};

struct ComplexityTrial {
  MotionModel mode = MotionModel::translation;
  int seed_index = 0;
  std::int64_t opt_units = 0;
  std::int64_t opt_interpolations = 0;
  std::int64_t opt_convolutions = 0;
  int opt_iterations = 0;
  double opt_zncc = 0.0;
  bool opt_converged = false;
  std::int64_t cover_draws = 0;
  std::int64_t cover_units = 0;
  double cover_zncc = 0.0;
  bool cover_converged = false;
};

struct ComplexityMode {
  MotionModel mode = MotionModel::translation;
  double mean_opt_units = 0.0;
  double mean_cover_units = 0.0;
  double ratio = 0.0;
  int opt_failures = 0;
  int cover_capped = 0;
  double units_per_iteration = 0.0;
};

struct ComplexityResult {
  std::vector<ComplexityTrial> trials;
  std::vector<ComplexityMode> modes;
};

/// Default sampler for a mode: translation in [-5, 5], rotation in
/// [-pi/4, pi/4], scale or singular values in [0.8, 1.25].
TransformSampler complexity_sampler(MotionModel mode);

ComplexityTrial complexity_trial(const ComplexityConfig& cfg, MotionModel mode, int seed_index,
                                 std::uint64_t seed);
ComplexityResult run_complexity(const ComplexityConfig& cfg, std::uint64_t seed, int jobs = 1);
CsvTable complexity_modes_csv(const ComplexityResult& r);
CsvTable complexity_trials_csv(const ComplexityResult& r);

// ---------------------------------------------------------------- spike

struct SpikeExperimentConfig {
  int continuum_instances = 100;
  int continuum_iters = 200;
  int discrete_seeds = 10;
  int discrete_iters = 300;
  int channels = 5;
  int rows = 61;
  int cols = 81;
  double sigma0 = 3.0;
  double safety = 0.2;
  /// sigma^2 = max(sigma_factor * sigma0^2 * max(1, s_max(A*))^2, bound).
  double sigma_factor = 2.0;
  double max_kappa = 4.0;
  TransformSampler sampler{MotionModel::affine, 3.0, 0.39269908169872414, 0.9, 1.1};
  double target_ncc = 0.95;
};

struct ContinuumRow {
  int instance = 0;
  int channels = 0;
  int k = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double objective = 0.0;
};

struct DiscreteRow {
  int seed_index = 0;
  int k = 0;
  double objective = 0.0;
  double ncc = 0.0;
  double lhs = 0.0;  // squared distance of the iterate to (A*, b*)
};

struct DiscreteSummary {
  int seed_index = 0;
  double sigma2 = 0.0;
  double final_ncc = 0.0;
  int first_k_at_target = -1;
  double initial_objective = 0.0;
  double final_objective = 0.0;
};

struct SpikeExperimentResult {
  std::vector<ContinuumRow> continuum;
  int continuum_violations = 0;
  std::vector<DiscreteRow> discrete;
  std::vector<DiscreteSummary> summaries;
};

/// lhs <= rhs up to round-off: a relative 1e-12 or an absolute 1e-28 floor.
bool bound_holds(double lhs, double rhs);

SpikeExperimentResult run_spike_experiment(const SpikeExperimentConfig& cfg, std::uint64_t seed, int jobs = 1);
DiscreteSummary discrete_spike_run(const SpikeExperimentConfig& cfg, int seed_index, std::uint64_t scene_seed,
                                   std::vector<DiscreteRow>* rows = nullptr);
CsvTable spike_continuum_csv(const SpikeExperimentResult& r);
CsvTable spike_discrete_csv(const SpikeExperimentResult& r);
CsvTable spike_summary_csv(const SpikeExperimentResult& r);

// ------------------------------------------------------------- register

struct RegisterOptions {
  /// basic, cost_smoothed, background or spike.
  std::string variant = "background";
  MotionModel model = MotionModel::euclidean;
  double sigma_start = 10.0;
  int iters = 250;
  int halve_every = 50;
  /// Energy-normalized step scale; used unless both steps are given.
  double eta = 0.5;
  double t_A = 0.0;
  double t_b = 0.0;
  double t_beta = 1.0;
  int beta_warmup = 5;
  /// Spike variant.
  double sigma0_2 = 9.0;
  double spike_sigma2 = 0.0;  // zero selects 2 sigma0^2 1.25^2
  double safety = 0.2;
  /// Where the motif grid sits in the scene; the centered offset when unset.
  bool has_anchor = false;
  Eigen::Vector2d anchor = Eigen::Vector2d::Zero();
};

struct RegisterOutcome {
  SolveResult result;
  double similarity = 0.0;  // ZNCC, or NCC for the spike variant
};

/// Per-channel mass centroids of a nonnegative image.
Eigen::Matrix2Xd channel_centroids(const Image& image);

RegisterOutcome register_images(const Image& scene, const Image& motif, const SupportMask& mask,
                                const RegisterOptions& opt);

}  // namespace invreg
