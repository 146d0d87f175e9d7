#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "invreg/config.hpp"
#include "invreg/errors.hpp"
#include "invreg/experiments.hpp"
#include "invreg/hierarchy.hpp"
#include "invreg/hierarchy_io.hpp"
#include "invreg/image_io.hpp"
#include "invreg/scenegen.hpp"

using namespace invreg;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

struct Run {
  Config cfg;
  std::uint64_t seed = 0;
  fs::path out;
  int jobs = 1;
};

Run prepare(const Common& c, const std::set<std::string>& keys) {
  std::set<std::string> allowed = keys;
  allowed.insert("seed");
  Run r;
  r.cfg = c.config.empty() ? Config{} : Config::load(c.config, allowed);
  r.seed = c.seed ? *c.seed : r.cfg.get_u64("seed", 0);
  if (c.seed) r.cfg.set("seed", std::to_string(*c.seed));
  if (c.jobs < 1) throw ConfigError("--jobs must be at least 1");
  r.jobs = c.jobs;
  r.out = fs::path(c.out);
  return r;
}

void emit(const Run& r, const std::string& name, const CsvTable& t) {
  fs::create_directories(r.out);
  write_text((r.out / name).string(), csv_document(t, r.cfg.hash_hex(), r.seed));
}

Eigen::Vector2d pair_of(const Config& cfg, const std::string& key, const Eigen::Vector2d& fallback) {
  if (!cfg.has(key)) return fallback;
  const std::vector<double> v = cfg.get_list(key, {});
  if (v.size() != 2) throw ConfigError("config key '" + key + "': expected two numbers");
  return {v[0], v[1]};
}

std::string params_text(const TransformParams& p) {
  std::ostringstream os;
  os << "model = " << to_string(p.model) << "\n";
  os << "A = " << fmt(p.A(0, 0)) << " " << fmt(p.A(0, 1)) << " " << fmt(p.A(1, 0)) << " " << fmt(p.A(1, 1)) << "\n";
  os << "b = " << fmt(p.b(0)) << " " << fmt(p.b(1)) << "\n";
  os << "center = " << fmt(p.center(0)) << " " << fmt(p.center(1)) << "\n";
  os << "theta = " << fmt(p.theta()) << "\n";
  return os.str();
}

// "synthetic:<seed>" names the generated three-part template.
std::optional<std::uint64_t> synthetic_seed(const std::string& v) {
  const std::string tag = "synthetic:";
  if (v.rfind(tag, 0) != 0) return std::nullopt;
  try {
    return std::stoull(v.substr(tag.size()));
  } catch (const std::exception&) {
    throw ConfigError("bad synthetic template '" + v + "'");
  }
}

// ------------------------------------------------------------ commands

const std::set<std::string> kRegisterKeys{"scene",       "motif",   "mask",     "variant",   "model",
                                          "sigma_start", "iters",   "halve_every", "eta",    "t_A",
                                          "t_b",         "t_beta",  "beta_warmup", "sigma0_2", "spike_sigma2",
                                          "safety",      "anchor"};

int cmd_register(const Common& c) {
  Run r = prepare(c, kRegisterKeys);
  const Config& cfg = r.cfg;
  if (!cfg.has("scene") || !cfg.has("motif")) throw ConfigError("register needs 'scene' and 'motif'");
  const Image scene = read_image(cfg.path("scene", ""));
  const Image motif = read_image(cfg.path("motif", ""));
  const SupportMask mask =
      cfg.has("mask") ? read_mask(cfg.path("mask", "")) : SupportMask(motif.rows(), motif.cols(), true);
  RegisterOptions opt;
  opt.variant = cfg.get("variant", opt.variant);
  opt.model = parse_motion_model(cfg.get("model", to_string(opt.model)));
  opt.sigma_start = cfg.get("sigma_start", opt.sigma_start);
  opt.iters = cfg.get("iters", opt.iters);
  opt.halve_every = cfg.get("halve_every", opt.halve_every);
  opt.eta = cfg.get("eta", opt.eta);
  opt.t_A = cfg.get("t_A", opt.t_A);
  opt.t_b = cfg.get("t_b", opt.t_b);
  opt.t_beta = cfg.get("t_beta", opt.t_beta);
  opt.beta_warmup = cfg.get("beta_warmup", opt.beta_warmup);
  opt.sigma0_2 = cfg.get("sigma0_2", opt.sigma0_2);
  opt.spike_sigma2 = cfg.get("spike_sigma2", opt.spike_sigma2);
  opt.safety = cfg.get("safety", opt.safety);
  if (cfg.has("anchor")) {
    opt.has_anchor = true;
    opt.anchor = pair_of(cfg, "anchor", {});
  }
  const RegisterOutcome o = register_images(scene, motif, mask, opt);

  CsvTable trace{{"k", "loss", "A00", "A01", "A10", "A11", "b0", "b1"}, {}};
  for (std::size_t k = 0; k < o.result.losses.size(); ++k) {
    const TransformParams& p = o.result.trace[k];
    trace.add({std::to_string(k), fmt(o.result.losses[k]), fmt(p.A(0, 0)), fmt(p.A(0, 1)), fmt(p.A(1, 0)),
               fmt(p.A(1, 1)), fmt(p.b(0)), fmt(p.b(1))});
  }
  emit(r, "register_trace.csv", trace);
  const char* label = opt.variant == "spike" ? "ncc" : "zncc";
  write_text((r.out / "register_params.txt").string(),
             params_text(o.result.params) + label + " = " + fmt(o.similarity) + "\n");
  std::printf("register: %s %s = %s\n", opt.variant.c_str(), label, fmt(o.similarity).c_str());
  return 0;
}

const std::set<std::string> kComplexityKeys{"modes",       "seeds",          "motif_size", "scene_size",
                                            "target_zncc", "sigma_start",    "sigma_start_affine",
                                            "max_iters",   "halve_every",    "eta",        "max_draws",
                                            "prescreen_pixels", "prescreen_zncc"};

int cmd_complexity(const Common& c) {
  Run r = prepare(c, kComplexityKeys);
  const Config& cfg = r.cfg;
  ComplexityConfig cc;
  if (cfg.has("modes")) {
    cc.modes.clear();
    for (const auto& w : cfg.get_words("modes", {})) cc.modes.push_back(parse_motion_model(w));
  }
  cc.seeds = cfg.get("seeds", cc.seeds);
  cc.motif_size = cfg.get("motif_size", cc.motif_size);
  cc.scene_size = cfg.get("scene_size", cc.scene_size);
  cc.target_zncc = cfg.get("target_zncc", cc.target_zncc);
  cc.sigma_start = cfg.get("sigma_start", cc.sigma_start);
  cc.sigma_start_affine = cfg.get("sigma_start_affine", cc.sigma_start_affine);
  cc.max_iters = cfg.get("max_iters", cc.max_iters);
  cc.halve_every = cfg.get("halve_every", cc.halve_every);
  cc.eta = cfg.get("eta", cc.eta);
  cc.max_draws = static_cast<std::int64_t>(cfg.get_u64("max_draws", static_cast<std::uint64_t>(cc.max_draws)));
  cc.prescreen_pixels = cfg.get("prescreen_pixels", cc.prescreen_pixels);
  cc.prescreen_zncc = cfg.get("prescreen_zncc", cc.prescreen_zncc);
  const ComplexityResult res = run_complexity(cc, r.seed, r.jobs);
  for (const ComplexityTrial& t : res.trials)
    std::fprintf(stderr, "complexity %s seed %d: opt %lld units (%s), cover %lld units (%s)\n",
                 to_string(t.mode).c_str(), t.seed_index, static_cast<long long>(t.opt_units),
                 t.opt_converged ? "converged" : "capped", static_cast<long long>(t.cover_units),
                 t.cover_converged ? "converged" : "capped");
  emit(r, "complexity_modes.csv", complexity_modes_csv(res));
  emit(r, "complexity_trials.csv", complexity_trials_csv(res));
  for (const ComplexityMode& m : res.modes)
    std::printf("%s: optimization %s, covering %s, ratio %s\n", to_string(m.mode).c_str(),
                fmt(m.mean_opt_units).c_str(), fmt(m.mean_cover_units).c_str(), fmt(m.ratio).c_str());
  return 0;
}

const std::set<std::string> kBasinKeys{"axis",       "translations", "axis_values", "runs",  "motif_size",
                                       "scene_size", "success_zncc", "model",       "sigma_start",
                                       "iters",      "halve_every",  "eta",         "t_beta", "beta_warmup"};

int cmd_basin(const Common& c) {
  Run r = prepare(c, kBasinKeys);
  const Config& cfg = r.cfg;
  BasinConfig bc;
  bc.axis = cfg.get("axis", bc.axis);
  bc.translations = cfg.get_list("translations", bc.translations);
  bc.axis_values = cfg.get_list("axis_values", bc.axis_values);
  bc.runs = cfg.get("runs", bc.runs);
  bc.motif_size = cfg.get("motif_size", bc.motif_size);
  bc.scene_size = cfg.get("scene_size", bc.scene_size);
  bc.success_zncc = cfg.get("success_zncc", bc.success_zncc);
  BackgroundSchedule& s = bc.schedule;
  s.model = parse_motion_model(cfg.get("model", to_string(s.model)));
  s.sigma_start = cfg.get("sigma_start", s.sigma_start);
  s.iters = cfg.get("iters", s.iters);
  s.halve_every = cfg.get("halve_every", s.halve_every);
  s.eta = cfg.get("eta", s.eta);
  s.t_beta = cfg.get("t_beta", s.t_beta);
  s.beta_warmup = cfg.get("beta_warmup", s.beta_warmup);
  const BasinResult res = run_basin(bc, r.seed, r.jobs);
  emit(r, "basin_cells.csv", basin_cells_csv(res));
  emit(r, "basin_runs.csv", basin_runs_csv(res));
  for (const BasinCell& cell : res.cells)
    std::printf("translation %s %s %s: mean zncc %s, success %s\n", fmt(cell.translation).c_str(), bc.axis.c_str(),
                fmt(cell.axis_value).c_str(), fmt(cell.mean_zncc).c_str(), fmt(cell.success_rate).c_str());
  return 0;
}

const std::set<std::string> kSpikeKeys{"continuum_instances", "continuum_iters", "discrete_seeds", "discrete_iters",
                                       "channels",            "rows",            "cols",           "sigma0",
                                       "safety",              "sigma_factor",    "max_kappa",      "max_translation",
                                       "max_rotation",        "min_scale",       "max_scale",      "target_ncc"};

int cmd_spike(const Common& c) {
  Run r = prepare(c, kSpikeKeys);
  const Config& cfg = r.cfg;
  SpikeExperimentConfig sc;
  sc.continuum_instances = cfg.get("continuum_instances", sc.continuum_instances);
  sc.continuum_iters = cfg.get("continuum_iters", sc.continuum_iters);
  sc.discrete_seeds = cfg.get("discrete_seeds", sc.discrete_seeds);
  sc.discrete_iters = cfg.get("discrete_iters", sc.discrete_iters);
  sc.channels = cfg.get("channels", sc.channels);
  sc.rows = cfg.get("rows", sc.rows);
  sc.cols = cfg.get("cols", sc.cols);
  sc.sigma0 = cfg.get("sigma0", sc.sigma0);
  sc.safety = cfg.get("safety", sc.safety);
  sc.sigma_factor = cfg.get("sigma_factor", sc.sigma_factor);
  sc.max_kappa = cfg.get("max_kappa", sc.max_kappa);
  sc.sampler.max_translation = cfg.get("max_translation", sc.sampler.max_translation);
  sc.sampler.max_rotation = cfg.get("max_rotation", sc.sampler.max_rotation);
  sc.sampler.min_scale = cfg.get("min_scale", sc.sampler.min_scale);
  sc.sampler.max_scale = cfg.get("max_scale", sc.sampler.max_scale);
  sc.target_ncc = cfg.get("target_ncc", sc.target_ncc);
  const SpikeExperimentResult res = run_spike_experiment(sc, r.seed, r.jobs);
  emit(r, "spike_continuum.csv", spike_continuum_csv(res));
  emit(r, "spike_discrete.csv", spike_discrete_csv(res));
  emit(r, "spike_summary.csv", spike_summary_csv(res));
  std::printf("continuum: %zu rows, %d bound violations\n", res.continuum.size(), res.continuum_violations);
  for (const DiscreteSummary& s : res.summaries)
    std::printf("discrete seed %d: final ncc %s, first k at target %d\n", s.seed_index, fmt(s.final_ncc).c_str(),
                s.first_k_at_target);
  if (res.continuum_violations > 0) {
    std::fprintf(stderr, "error: continuum bound violated %d times\n", res.continuum_violations);
    return 3;
  }
  return 0;
}

// Template image and, for synthetic templates, its spec.
struct TemplateInput {
  Image image;
  SupportMask support;
  std::optional<TemplateSpec> spec;
};

TemplateInput load_template(const Config& cfg) {
  const std::string v = cfg.get("template", std::string());
  if (v.empty()) throw ConfigError("missing config key 'template'");
  TemplateInput t;
  if (const auto s = synthetic_seed(v)) {
    t.spec = synthetic_template(*s);
    RenderedTemplate rt = render_template(*t.spec, {});
    t.image = std::move(rt.image);
    t.support = std::move(rt.support);
  } else {
    t.image = read_image(cfg.path("template", ""));
    t.support = SupportMask::nonzero(t.image);
  }
  return t;
}

Hierarchy load_hierarchy(const Config& cfg, const TemplateInput* tmpl) {
  if (cfg.has("hierarchy")) return read_hierarchy(cfg.path("hierarchy", ""));
  if (tmpl && tmpl->spec) return synthetic_hierarchy(*tmpl->spec, synthetic_leaf_params(), synthetic_spike_params());
  throw ConfigError("missing config key 'hierarchy'");
}

const std::set<std::string> kExtractKeys{"hierarchy", "template", "margin"};

int cmd_extract(const Common& c) {
  Run r = prepare(c, kExtractKeys);
  const TemplateInput t = load_template(r.cfg);
  Hierarchy h = load_hierarchy(r.cfg, &t);
  const auto motifs = extract(t.image, h, r.cfg.get("margin", 6));
  fs::create_directories(r.out);
  for (const auto& [id, e] : motifs)
    for (int k = 0; k < e.motif.channels(); ++k)
      write_png_scaled((r.out / ("node" + std::to_string(id) + "_channel" + std::to_string(k) + ".png")).string(),
                       e.motif.channel(k));
  write_hierarchy((r.out / "hierarchy.txt").string(), h);
  std::printf("extract: %zu non-leaf motifs\n", motifs.size());
  return 0;
}

const std::set<std::string> kCalibrateKeys{"hierarchy",  "template",       "margin",        "rotations",
                                           "part_rotation", "scene_size", "success_radius"};

int cmd_calibrate(const Common& c) {
  Run r = prepare(c, kCalibrateKeys);
  const Config& cfg = r.cfg;
  const TemplateInput t = load_template(cfg);
  Hierarchy h = load_hierarchy(cfg, &t);
  const std::vector<double> rotations = cfg.get_list("rotations", {-0.3927, -0.19, 0.0, 0.19, 0.3927});
  const double part_rotation = cfg.get("part_rotation", std::numbers::pi / 16.0);
  const int scene_size = cfg.get("scene_size", 96);
  const std::vector<CalibrationScene> scenes =
      t.spec ? articulated_sweep(*t.spec, rotations, part_rotation, scene_size, r.seed)
             : rigid_sweep(t.image, t.support, rotations, scene_size, r.seed);
  fs::create_directories(r.out);
  CalibrationReport rep;
  try {
    rep = calibrate(h, scenes, cfg.get("success_radius", 2.0), &t.image, cfg.get("margin", 6));
  } catch (const CalibrationError& e) {
    write_text((r.out / "calibration_report.txt").string(), std::string("non-separable: ") + e.what() + "\n");
    throw;
  }
  CsvTable table{{"node", "gamma", "max_success_loss", "min_failure_loss", "successes", "failures"}, {}};
  for (const auto& [id, g] : rep.gamma)
    table.add({std::to_string(id), fmt(g), fmt(rep.max_success[id]), fmt(rep.min_failure[id]),
               std::to_string(rep.successes[id]), std::to_string(rep.failures[id])});
  emit(r, "gamma.csv", table);
  write_hierarchy((r.out / "hierarchy.txt").string(), h);
  for (const auto& [id, g] : rep.gamma) std::printf("node %d: gamma %s\n", id, fmt(g).c_str());
  return 0;
}

const std::set<std::string> kDetectKeys{"hierarchy", "scene", "threshold_fraction"};

int cmd_detect(const Common& c) {
  Run r = prepare(c, kDetectKeys);
  const Config& cfg = r.cfg;
  if (!cfg.has("scene")) throw ConfigError("missing config key 'scene'");
  const Hierarchy h = load_hierarchy(cfg, nullptr);
  const Image scene = read_image(cfg.path("scene", ""));
  const DetectionResult d = detect(scene, h);
  const double thr = detection_threshold(h, cfg.get("threshold_fraction", 0.5));
  fs::create_directories(r.out);
  write_png_scaled((r.out / "omega0.png").string(), d.omega0);
  write_raw((r.out / "omega0.raw").string(), d.omega0);
  CsvTable table{{"node", "lambda0", "lambda1", "theta", "b0", "b1", "location0", "location1", "loss"}, {}};
  for (const auto& [id, nd] : d.nodes) {
    if (nd.best < 0) {
      table.add({std::to_string(id), "", "", "", "", "", "", "", ""});
      continue;
    }
    const AnchorResult& a = nd.anchors[nd.best];
    table.add({std::to_string(id), fmt(a.lambda(0)), fmt(a.lambda(1)), fmt(a.params.theta()), fmt(a.params.b(0)),
               fmt(a.params.b(1)), fmt(a.location()(0)), fmt(a.location()(1)), fmt(a.loss)});
  }
  emit(r, "detect_transforms.csv", table);
  if (d.peak >= thr)
    std::printf("detection at (%s, %s) peak %s threshold %s\n", fmt(d.peak_location(0)).c_str(),
                fmt(d.peak_location(1)).c_str(), fmt(d.peak).c_str(), fmt(thr).c_str());
  else
    std::printf("no detection (peak %s below threshold %s)\n", fmt(d.peak).c_str(), fmt(thr).c_str());
  return 0;
}

const std::set<std::string> kFixtureKeys{"kind",     "template",      "scene_size", "motif_size", "rotation",
                                         "scale",    "translation",   "part_rotation", "channels", "max_kappa"};

int cmd_fixture(const Common& c) {
  Run r = prepare(c, kFixtureKeys);
  const Config& cfg = r.cfg;
  const std::string kind = cfg.get("kind", std::string("textured"));
  const int scene_size = cfg.get("scene_size", 256);
  const double rot = cfg.get("rotation", 0.0);
  const Eigen::Vector2d shift = pair_of(cfg, "translation", Eigen::Vector2d::Zero());
  fs::create_directories(r.out);
  std::string truth;
  if (kind == "textured") {
    TransformParams p = TransformParams::identity(MotionModel::similarity);
    p.A = cfg.get("scale", 1.0) * rotation(rot);
    p.b = shift;
    const int m = cfg.get("motif_size", 64);
    const TexturedTrial t = textured_trial(p, derive_seed(r.seed, 0), derive_seed(r.seed, 1), m, scene_size);
    write_png((r.out / "scene.png").string(), t.problem.scene);
    write_png((r.out / "motif.png").string(), t.motif.image);
    write_png((r.out / "mask.png").string(), t.motif.mask.as_image());
    truth = params_text(t.truth);
  } else if (kind == "articulated" || kind == "clutter") {
    const std::string tv = cfg.get("template", std::string("synthetic:1"));
    const auto ts = synthetic_seed(tv);
    if (!ts) throw ConfigError("fixture templates must be synthetic:<seed>");
    Image scene;
    if (kind == "clutter") {
      scene = clutter(scene_size, scene_size, r.seed);
    } else {
      const TemplateSpec spec = synthetic_template(*ts);
      const double pr = cfg.get("part_rotation", std::numbers::pi / 16.0);
      const CalibrationScene s = articulated_sweep(spec, {rot}, pr, scene_size, r.seed).front();
      scene = s.scene;
      // Truth location of the template center in the scene.
      const Eigen::Vector2d at = s.locate(grid_center(spec.rows, spec.cols));
      truth = params_text(s.global) + "offset = " + fmt(s.offset(0)) + " " + fmt(s.offset(1)) +
              "\ntemplate_center = " + fmt(at(0)) + " " + fmt(at(1)) + "\n";
    }
    write_png((r.out / "scene.png").string(), scene);
  } else if (kind == "spike") {
    TransformSampler sampler{MotionModel::affine, 3.0, std::numbers::pi / 8.0, 0.9, 1.1};
    const SpikeScene s = spike_scene(sampler, r.seed, cfg.get("channels", 5), 61, 81, 3.0, cfg.get("max_kappa", 4.0));
    write_raw((r.out / "scene.raw").string(), s.scene);
    write_raw((r.out / "motif.raw").string(), s.motif);
    truth = params_text(s.truth);
  } else {
    throw ConfigError("unknown fixture kind '" + kind + "'");
  }
  write_text((r.out / "truth.txt").string(), truth);
  std::ostringstream spec;
  spec << "kind = " << kind << "\nseed = " << r.seed << "\nconfig_hash = " << cfg.hash_hex() << "\n";
  write_text((r.out / "spec.txt").string(), spec.str());
  std::printf("fixture: %s written to %s\n", kind.c_str(), r.out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant registration and hierarchical motif detection"};
  app.require_subcommand(1);
  struct Entry {
    const char* name;
    const char* help;
    int (*fn)(const Common&);
  };
  const Entry entries[] = {
      {"register", "register a motif against a scene", cmd_register},
      {"exp-complexity", "optimization vs covering operation counts", cmd_complexity},
      {"exp-basin", "basin of attraction heat map", cmd_basin},
      {"exp-spike", "spike registration bound and discrete runs", cmd_spike},
      {"extract", "extract non-leaf motifs from a template", cmd_extract},
      {"calibrate", "calibrate per-node detection thresholds", cmd_calibrate},
      {"detect", "hierarchical detection on a scene", cmd_detect},
      {"fixture", "write a synthetic scene fixture", cmd_fixture},
  };
  Common common;
  std::uint64_t seed = 0;
  int (*chosen)(const Common&) = nullptr;
  for (const Entry& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", common.config, "key = value config file");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--seed", seed, "seed (overrides the config)");
    sub->add_option("--jobs", common.jobs, "worker threads");
    sub->callback([&chosen, &e] { chosen = e.fn; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  for (CLI::App* sub : app.get_subcommands())
    if (sub->count("--seed")) common.seed = seed;
  try {
    return chosen(common);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericDomainError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const CalibrationError& e) {
    std::fprintf(stderr, "calibration error: %s\n", e.what());
    return 4;
  }
}
