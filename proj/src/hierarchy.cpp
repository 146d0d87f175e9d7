#include "invreg/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/SVD>

#include "invreg/errors.hpp"
#include "invreg/experiments.hpp"
#include "invreg/gaussian.hpp"
#include "invreg/objectives.hpp"
#include "invreg/solver.hpp"

namespace invreg {

namespace {

void check_params(int id, const NodeParams& p) {
  const std::string who = "node " + std::to_string(id) + ": ";
  if (p.stride_h < 1 || p.stride_w < 1) throw ConfigError(who + "strides must be >= 1");
  if (!(p.alpha > 0.0)) throw ConfigError(who + "alpha must be positive");
  if (!(p.gamma >= 0.0)) throw ConfigError(who + "gamma must be nonnegative");
  if (p.iters < 0 || p.fine_iters < 0) throw ConfigError(who + "iteration counts must be nonnegative");
  if (!(p.sigma0_2 > 0.0)) throw ConfigError(who + "sigma0^2 must be positive");
  if (!(p.step_scale > 0.0)) throw ConfigError(who + "step scale must be positive");
  if (p.merge_radius < 0.0) throw ConfigError(who + "merge radius must be nonnegative");
  if (p.sigma2 < 0.0 || p.input_sigma2 < 0.0 || !(p.fine_sigma2 > 0.0))
    throw ConfigError(who + "smoothing variances must be nonnegative");
}

std::string anchor_context(int id, const Eigen::Vector2d& l) {
  return "node " + std::to_string(id) + " anchor (" + fmt(l(0)) + ", " + fmt(l(1)) + "): ";
}

template <class F>
auto with_context(int id, const Eigen::Vector2d& l, F&& f) {
  try {
    return f();
  } catch (const NumericDomainError& e) {
    throw NumericDomainError(anchor_context(id, l) + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(anchor_context(id, l) + e.what());
  }
}

SupportMask mask_or_full(const HierarchyNode& n) {
  return n.mask.rows() == 0 ? SupportMask(n.motif.rows(), n.motif.cols(), true) : n.mask;
}

}  // namespace

Hierarchy::Hierarchy(std::vector<HierarchyNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ConfigError("hierarchy has no nodes");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const int id = nodes_[i].id;
    if (id < 0) throw ConfigError("node ids must be nonnegative");
    if (!index_.emplace(id, i).second) throw ConfigError("duplicate node id " + std::to_string(id));
    check_params(id, nodes_[i].params);
  }
  for (const HierarchyNode& n : nodes_) {
    std::set<int> seen;
    for (int c : n.children) {
      if (!index_.count(c)) throw ConfigError("node " + std::to_string(n.id) + " lists unknown child " + std::to_string(c));
      if (c == n.id) throw ConfigError("node " + std::to_string(c) + " is its own child");
      if (!seen.insert(c).second) throw ConfigError("node " + std::to_string(n.id) + " lists a child twice");
      if (!parent_.emplace(c, n.id).second) throw ConfigError("node " + std::to_string(c) + " has two parents");
    }
  }
  std::vector<int> roots;
  for (const HierarchyNode& n : nodes_)
    if (!parent_.count(n.id)) roots.push_back(n.id);
  if (roots.size() != 1) throw ConfigError("hierarchy must have exactly one root (found " + std::to_string(roots.size()) + ")");
  root_ = roots.front();
  parent_[root_] = -1;
  std::deque<int> queue{root_};
  depth_[root_] = 0;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    for (int c : node(v).children) {
      if (depth_.count(c)) throw ConfigError("hierarchy contains a cycle");
      depth_[c] = depth_[v] + 1;
      queue.push_back(c);
    }
  }
  if (depth_.size() != nodes_.size()) throw ConfigError("hierarchy contains a cycle or unreachable nodes");
  for (const auto& [id, d] : depth_) order_.push_back(id);
  std::stable_sort(order_.begin(), order_.end(), [&](int a, int b) { return depth_.at(a) > depth_.at(b); });
}

const HierarchyNode& Hierarchy::node(int id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw ConfigError("no node " + std::to_string(id));
  return nodes_[it->second];
}

HierarchyNode& Hierarchy::node(int id) {
  const auto it = index_.find(id);
  if (it == index_.end()) throw ConfigError("no node " + std::to_string(id));
  return nodes_[it->second];
}

void Hierarchy::check_motifs() const {
  for (const HierarchyNode& n : nodes_) {
    const std::string who = "node " + std::to_string(n.id) + ": ";
    if (n.motif.empty()) throw ConfigError(who + "missing motif");
    if (n.is_leaf() && n.motif.channels() != 3) throw ConfigError(who + "leaf motifs must be RGB");
    if (!n.is_leaf() && n.motif.channels() != static_cast<int>(n.children.size()))
      throw ConfigError(who + "motif channels must equal the child count");
    if (n.mask.rows() != 0 && (n.mask.rows() != n.motif.rows() || n.mask.cols() != n.motif.cols()))
      throw ConfigError(who + "mask shape differs from the motif");
  }
}

std::vector<Eigen::Vector2d> stride_grid(int rows, int cols, int dh, int dw) {
  if (dh < 1 || dw < 1) throw ConfigError("strides must be >= 1");
  std::vector<Eigen::Vector2d> out;
  for (int i = 0; i < rows; i += dh)
    for (int j = 0; j < cols; j += dw) out.emplace_back(i, j);
  return out;
}

std::vector<AnchorResult> register_visual_at_strides(const Image& scene, const HierarchyNode& node) {
  if (!node.is_leaf()) throw ConfigError("visual registration needs a leaf node");
  const NodeParams& prm = node.params;
  const Image coarse_scene =
      prm.input_sigma2 > 0.0 ? convolve(scene, GaussianFilter::isotropic(prm.input_sigma2)) : scene;
  const int m = node.motif.rows(), n = node.motif.cols();
  const Eigen::Vector2d c = grid_center(m, n);
  const SupportMask mask = mask_or_full(node);

  SolverConfig coarse_cfg;
  coarse_cfg.model = MotionModel::euclidean;
  coarse_cfg.iters = prm.iters;
  const StepPair sc = heuristic_steps(std::sqrt(std::max(prm.sigma2, 1e-12)), m, n);
  coarse_cfg.t_A = prm.step_scale * sc.t_A;
  coarse_cfg.t_b = prm.step_scale * sc.t_b;
  SolverConfig fine_cfg = coarse_cfg;
  fine_cfg.iters = prm.fine_iters;
  const StepPair sf = heuristic_steps(std::sqrt(prm.fine_sigma2), m, n);
  fine_cfg.t_A = prm.step_scale * sf.t_A;
  fine_cfg.t_b = prm.step_scale * sf.t_b;

  const std::vector<Eigen::Vector2d> grid = stride_grid(scene.rows(), scene.cols(), prm.stride_h, prm.stride_w);
  std::vector<AnchorResult> out(grid.size());
  for (std::size_t a = 0; a < grid.size(); ++a) {
    out[a].lambda = grid[a];
    with_context(node.id, grid[a], [&] {
      RegistrationProblem pc;
      pc.scene = coarse_scene;
      pc.motif = node.motif;
      pc.mask = mask;
      pc.sigma2 = prm.sigma2;
      pc.anchor = grid[a] - c;
      RegistrationProblem pf = pc;
      pf.scene = scene;
      pf.sigma2 = prm.fine_sigma2;
      const CostSmoothedObjective coarse(std::move(pc));
      const CostSmoothedObjective fine(std::move(pf));
      const SolveResult r =
          two_phase_refine(coarse, coarse_cfg, fine, fine_cfg, TransformParams::identity(MotionModel::euclidean, c));
      out[a].params = r.params;
      out[a].loss = r.losses.back();
      return 0;
    });
  }
  return out;
}

std::pair<double, double> spike_node_steps(const Image& motif, double sigma2) {
  const Eigen::Matrix2Xd u = channel_centroids(motif);
  const Eigen::Matrix2Xd U = u.colwise() - u.rowwise().mean();
  const double c = static_cast<double>(U.cols());
  const double smax = Eigen::JacobiSVD<Eigen::MatrixXd>(U).singularValues()(0);
  // Bumps of mass a scale the objective by a^2.
  double mass2 = 0.0;
  for (int k = 0; k < motif.channels(); ++k) {
    double s = 0.0;
    for (double v : motif.plane(k)) s += v;
    mass2 += s * s / c;
  }
  if (!(mass2 > 0.0)) throw NumericDomainError("spike motif has no mass");
  const double s4 = sigma2 * sigma2;
  const double t_b = 8.0 * std::numbers::pi * s4 / mass2;
  const double t_A = smax > 1e-9 ? 8.0 * std::numbers::pi * c * s4 / (smax * smax) / mass2 : t_b;
  return {t_A, t_b};
}

std::vector<AnchorResult> register_spike_at_strides(const Image& features, const HierarchyNode& node) {
  if (node.is_leaf()) throw ConfigError("spike registration needs a non-leaf node");
  if (features.channels() != node.motif.channels()) throw ConfigError("feature channels differ from the spike motif");
  const NodeParams& prm = node.params;
  const double sigma2 = prm.sigma2 > 0.0 ? prm.sigma2 : 2.0 * prm.sigma0_2;
  const int m = node.motif.rows(), n = node.motif.cols();
  const Eigen::Vector2d c = grid_center(m, n);
  const SupportMask mask = mask_or_full(node);
  const auto [t_A, t_b] = spike_node_steps(node.motif, sigma2);
  const bool single = node.motif.channels() == 1;

  SolverConfig cfg;
  cfg.model = single ? MotionModel::translation : MotionModel::euclidean;
  cfg.iters = prm.iters;
  cfg.t_A = prm.step_scale * t_A;
  cfg.t_b = prm.step_scale * t_b;

  double motif_energy = 0.0;
  for (int k = 0; k < node.motif.channels(); ++k)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        if (mask.contains(i, j)) motif_energy += node.motif(i, j, k) * node.motif(i, j, k);

  const std::vector<Eigen::Vector2d> grid =
      stride_grid(features.rows(), features.cols(), prm.stride_h, prm.stride_w);
  std::vector<AnchorResult> out(grid.size());
  for (std::size_t a = 0; a < grid.size(); ++a) {
    AnchorResult& res = out[a];
    res.lambda = grid[a];
    res.params = TransformParams::identity(cfg.model, c);
    const Eigen::Vector2d top = grid[a] - c;
    if (prm.prescreen) {
      const int di = static_cast<int>(std::floor(top(0) + 0.5)), dj = static_cast<int>(std::floor(top(1) + 0.5));
      double e = 0.0;
      for (int k = 0; k < features.channels(); ++k)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            if (mask.contains(i, j)) {
              const double v = features.at(i + di, j + dj, k);
              e += v * v;
            }
      if (e < prm.prescreen_fraction * motif_energy) {
        res.skipped = true;
        res.loss = std::numeric_limits<double>::infinity();
        continue;
      }
    }
    with_context(node.id, grid[a], [&] {
      RegistrationProblem p;
      p.scene = features;
      p.motif = node.motif;
      p.mask = mask;
      p.sigma2 = sigma2;
      p.anchor = top;
      const SpikeObjective obj(std::move(p), {prm.sigma0_2, true, true});
      const SolveResult r = prox_grad_solve(obj, cfg, TransformParams::identity(cfg.model, c));
      res.params = obj.standard(r.params);
      res.loss = r.losses.back();
      return 0;
    });
  }
  return out;
}

double bump_peak(const HierarchyNode& node) { return 1.0 / (2.0 * std::numbers::pi * node.params.sigma0_2); }

double detection_threshold(const Hierarchy& h, double fraction) {
  if (!(fraction > 0.0)) throw ConfigError("detection threshold fraction must be positive");
  return fraction * bump_peak(h.node(h.root()));
}

Image occurrence_map(int rows, int cols, const std::vector<AnchorResult>& anchors, const HierarchyNode& node) {
  Image out(rows, cols, 1);
  const double diag = std::hypot(node.motif.rows(), node.motif.cols());
  const double merge = node.params.merge_radius;
  std::vector<std::size_t> order;
  for (std::size_t a = 0; a < anchors.size(); ++a)
    if (!anchors[a].skipped && std::isfinite(anchors[a].loss) && anchors[a].params.b.allFinite()) order.push_back(a);
  if (merge > 0.0)
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return anchors[x].loss < anchors[y].loss; });
  std::vector<Eigen::Vector2d> placed;
  for (std::size_t a : order) {
    Eigen::Vector2d b = anchors[a].params.b;
    const double nb = b.norm();
    if (nb > diag) b *= diag / nb;
    const Eigen::Vector2d at = anchors[a].lambda + b;
    if (merge > 0.0) {
      bool near = false;
      for (const auto& q : placed) near = near || (q - at).norm() <= merge;
      if (near) continue;
      placed.push_back(at);
    }
    const double amp = std::exp(-node.params.alpha * std::max(0.0, anchors[a].loss - node.params.gamma));
    if (amp > 0.0) add_bump(out, 0, at, node.params.sigma0_2, amp);
  }
  return out;
}

Image aggregate_children(const std::map<int, Image>& child_maps, const HierarchyNode& node) {
  if (node.is_leaf()) throw ConfigError("aggregation needs a non-leaf node");
  std::vector<int> ids = node.children;
  std::sort(ids.begin(), ids.end());
  std::vector<Image> planes;
  for (int id : ids) {
    const auto it = child_maps.find(id);
    if (it == child_maps.end()) throw ConfigError("missing occurrence map for child " + std::to_string(id));
    if (it->second.channels() != 1) throw ConfigError("occurrence maps are single-channel");
    if (!planes.empty() && (it->second.rows() != planes[0].rows() || it->second.cols() != planes[0].cols()))
      throw ConfigError("child occurrence maps differ in shape");
    planes.push_back(it->second);
  }
  return stack_channels(planes);
}

namespace {

NodeDetection run_node(const Image& scene, const HierarchyNode& node, const std::map<int, Image>& maps) {
  NodeDetection d;
  if (node.is_leaf()) {
    d.anchors = register_visual_at_strides(scene, node);
  } else {
    d.features = aggregate_children(maps, node);
    d.anchors = register_spike_at_strides(d.features, node);
  }
  d.occurrence = occurrence_map(scene.rows(), scene.cols(), d.anchors, node);
  for (std::size_t a = 0; a < d.anchors.size(); ++a)
    if (!d.anchors[a].skipped && (d.best < 0 || d.anchors[a].loss < d.anchors[d.best].loss)) d.best = static_cast<int>(a);
  return d;
}

}  // namespace

DetectionResult detect(const Image& scene, const Hierarchy& h) {
  h.check_motifs();
  DetectionResult out;
  std::map<int, Image> maps;
  for (int id : h.traversal()) {
    NodeDetection d = run_node(scene, h.node(id), maps);
    maps[id] = d.occurrence;
    out.nodes[id] = std::move(d);
  }
  out.omega0 = maps.at(h.root());
  out.peak = -1.0;
  for (int i = 0; i < out.omega0.rows(); ++i)
    for (int j = 0; j < out.omega0.cols(); ++j)
      if (out.omega0(i, j) > out.peak) {
        out.peak = out.omega0(i, j);
        out.peak_location = Eigen::Vector2d(i, j);
      }
  return out;
}

namespace {

ExtractedMotif extract_node(const std::map<int, Image>& maps, Hierarchy& h, int id, int margin) {
  HierarchyNode& node = h.node(id);
  Image y = aggregate_children(maps, node);
  std::vector<int> ids = node.children;
  std::sort(ids.begin(), ids.end());
  int i0 = y.rows(), i1 = -1, j0 = y.cols(), j1 = -1;
  for (int k = 0; k < y.channels(); ++k) {
    const double thr = bump_peak(h.node(ids[k])) / 20.0;
    for (int i = 0; i < y.rows(); ++i)
      for (int j = 0; j < y.cols(); ++j) {
        if (y(i, j, k) < thr) {
          y(i, j, k) = 0.0;
          continue;
        }
        i0 = std::min(i0, i), i1 = std::max(i1, i);
        j0 = std::min(j0, j), j1 = std::max(j1, j);
      }
  }
  if (i1 < 0) throw ConfigError("extraction of node " + std::to_string(id) + " found no support");
  ExtractedMotif e;
  e.origin = Eigen::Vector2i(i0 - margin, j0 - margin);
  const int rows = i1 - i0 + 1 + 2 * margin, cols = j1 - j0 + 1 + 2 * margin;
  e.motif = Image(rows, cols, y.channels());
  for (int k = 0; k < y.channels(); ++k)
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) e.motif(i, j, k) = y.at(i + e.origin(0), j + e.origin(1), k);
  e.mask = SupportMask(rows, cols, true);
  node.motif = e.motif;
  node.mask = e.mask;
  node.canonical_center = e.origin.cast<double>() + grid_center(rows, cols);
  return e;
}

}  // namespace

std::map<int, ExtractedMotif> extract(const Image& tmpl, Hierarchy& h, int margin) {
  if (margin < 0) throw ConfigError("extraction margin must be nonnegative");
  std::map<int, ExtractedMotif> out;
  std::map<int, Image> maps;
  for (int id : h.traversal()) {
    HierarchyNode& node = h.node(id);
    if (node.is_leaf()) {
      if (node.motif.channels() != 3) throw ConfigError("node " + std::to_string(id) + ": leaf motifs must be RGB");
    } else {
      out[id] = extract_node(maps, h, id, margin);
    }
    maps[id] = run_node(tmpl, node, maps).occurrence;
  }
  return out;
}

CalibrationReport calibrate(Hierarchy& h, const std::vector<CalibrationScene>& scenes, double success_radius,
                            const Image* tmpl, int margin) {
  if (scenes.empty()) throw ConfigError("calibration needs at least one scene");
  if (!(success_radius > 0.0)) throw ConfigError("success radius must be positive");
  if (margin < 0) throw ConfigError("extraction margin must be nonnegative");
  if (!tmpl) h.check_motifs();
  CalibrationReport rep;
  std::vector<std::map<int, Image>> maps(scenes.size());
  std::map<int, Image> tmpl_maps;
  for (int id : h.traversal()) {
    HierarchyNode& node = h.node(id);
    if (tmpl && !node.is_leaf()) rep.extracted[id] = extract_node(tmpl_maps, h, id, margin);
    std::vector<std::vector<AnchorResult>> anchors(scenes.size());
    double max_s = -std::numeric_limits<double>::infinity(), min_f = std::numeric_limits<double>::infinity();
    int ns = 0, nf = 0;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      anchors[s] = run_node(scenes[s].scene, node, maps[s]).anchors;
      const Eigen::Vector2d truth = scenes[s].locate(node.canonical_center);
      for (const AnchorResult& a : anchors[s]) {
        if (a.skipped || !std::isfinite(a.loss)) continue;
        if ((a.location() - truth).norm() <= success_radius) {
          max_s = std::max(max_s, a.loss);
          ++ns;
        } else {
          min_f = std::min(min_f, a.loss);
          ++nf;
        }
      }
    }
    rep.max_success[id] = max_s;
    rep.min_failure[id] = min_f;
    rep.successes[id] = ns;
    rep.failures[id] = nf;
    if (ns == 0) throw CalibrationError("node " + std::to_string(id) + ": no anchor registered successfully");
    if (nf > 0 && !(max_s < min_f))
      throw CalibrationError("node " + std::to_string(id) + ": no separating threshold (max success loss " +
                             fmt(max_s) + " >= min failure loss " + fmt(min_f) + ")");
    const double gamma = nf > 0 ? 0.5 * (max_s + min_f) : max_s * (1.0 + 1e-9) + 1e-300;
    node.params.gamma = std::max(0.0, gamma);
    rep.gamma[id] = node.params.gamma;
    for (std::size_t s = 0; s < scenes.size(); ++s)
      maps[s][id] = occurrence_map(scenes[s].scene.rows(), scenes[s].scene.cols(), anchors[s], node);
    if (tmpl) tmpl_maps[id] = run_node(*tmpl, node, tmpl_maps).occurrence;
  }
  return rep;
}

std::vector<CalibrationScene> rigid_sweep(const Image& tmpl, const SupportMask& support,
                                          const std::vector<double>& rotations, int scene_size,
                                          std::uint64_t seed) {
  std::vector<CalibrationScene> out;
  const Eigen::Vector2d c = grid_center(tmpl.rows(), tmpl.cols());
  for (std::size_t i = 0; i < rotations.size(); ++i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    CalibrationScene s;
    s.global = TransformParams::identity(MotionModel::euclidean, c);
    s.global.A = rotation(rotations[i]);
    s.global.b = Eigen::Vector2d(u(rng), u(rng));
    s.offset = embed_offset(scene_size, scene_size, tmpl.rows(), tmpl.cols());
    s.scene = embed(clutter(scene_size, scene_size, rng()), tmpl, support, s.global);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<CalibrationScene> articulated_sweep(const TemplateSpec& spec, const std::vector<double>& rotations,
                                                double part_rotation, int scene_size, std::uint64_t seed) {
  std::vector<CalibrationScene> out;
  const Eigen::Vector2d c = grid_center(spec.rows, spec.cols);
  for (std::size_t i = 0; i < rotations.size(); ++i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    std::uniform_real_distribution<double> u(-3.0, 3.0), w(-1.0, 1.0);
    CalibrationScene s;
    s.global = TransformParams::identity(MotionModel::euclidean, c);
    s.global.A = rotation(rotations[i]);
    s.global.b = Eigen::Vector2d(u(rng), u(rng));
    std::vector<TransformParams> parts;
    for (const PartSpec& p : spec.parts) {
      TransformParams t = TransformParams::identity(MotionModel::euclidean);
      t.A = rotation(std::min(part_rotation, p.max_rotation) * w(rng));
      parts.push_back(t);
    }
    s.offset = embed_offset(scene_size, scene_size, spec.rows, spec.cols);
    s.scene = articulated_observation(spec, s.global, parts, clutter(scene_size, scene_size, rng()));
    out.push_back(std::move(s));
  }
  return out;
}

Hierarchy synthetic_hierarchy(const TemplateSpec& spec, const NodeParams& leaf, const NodeParams& spike) {
  if (spec.parts.size() != 3) throw ConfigError("the synthetic hierarchy needs a three-part template");
  std::vector<HierarchyNode> nodes;
  HierarchyNode root;
  root.id = 0;
  root.children = {1, 4};
  root.params = spike;
  nodes.push_back(root);
  for (int k = 0; k < 3; ++k) {
    HierarchyNode n;
    n.id = k + 1;
    n.motif = spec.parts[k].motif;
    n.mask = spec.parts[k].mask;
    n.canonical_center = spec.part_center(k);
    n.params = leaf;
    nodes.push_back(std::move(n));
  }
  HierarchyNode pair;
  pair.id = 4;
  pair.children = {2, 3};
  pair.params = spike;
  nodes.push_back(pair);
  return Hierarchy(std::move(nodes));
}

NodeParams synthetic_leaf_params() {
  NodeParams p;
  p.iters = 100;
  p.fine_iters = 64;
  p.stride_h = p.stride_w = 8;
  p.step_scale = 10.0;
  p.alpha = 50.0;
  p.merge_radius = 4.0;
  return p;
}

NodeParams synthetic_spike_params() {
  NodeParams p;
  p.iters = 128;
  p.stride_h = p.stride_w = 8;
  p.sigma2 = 0.0;
  p.alpha = 2.5e5;
  p.step_scale = 0.2;
  p.prescreen = true;
  p.merge_radius = 4.0;
  return p;
}

}  // namespace invreg
