#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "invreg/image.hpp"
#include "invreg/scenegen.hpp"
#include "invreg/transform.hpp"

namespace invreg {

/// Per-node hyperparameters. Visual (leaf) nodes run a two-phase
/// cost-smoothed SE(2) registration; spike nodes run the complementary
/// smoothing spike objective on their children's occurrence maps.
struct NodeParams {
  int iters = 1024;
  int fine_iters = 256;
  double fine_sigma2 = 1e-2;
  int stride_h = 20;
  int stride_w = 20;
  /// Visual: cost-smoothing variance. Spike: filter variance; zero selects 2 sigma0^2.
  double sigma2 = 9.0;
  double sigma0_2 = 9.0;
  double input_sigma2 = 2.25;
  double alpha = 1.0;
  double gamma = 0.0;
  /// Multiplier on the heuristic steps (visual) or theorem steps (spike).
  double step_scale = 1.0;
  /// Skip anchors whose masked scene energy is below prescreen_fraction of the motif energy.
  bool prescreen = false;
  double prescreen_fraction = 0.1;
  /// When positive, an anchor landing within this many pixels of a lower-loss
  /// anchor adds no bump. Zero keeps every bump.
  double merge_radius = 0.0;
};

struct HierarchyNode {
  int id = 0;
  std::vector<int> children;
  Image motif;
  SupportMask mask;
  /// Location of the motif center in the canonical template frame.
  Eigen::Vector2d canonical_center = Eigen::Vector2d::Zero();
  NodeParams params;

  bool is_leaf() const { return children.empty(); }
};

/// Validated rooted tree of nodes.
class Hierarchy {
 public:
  Hierarchy() = default;
  /// Throws ConfigError unless the nodes form a single rooted tree with unique ids.
  explicit Hierarchy(std::vector<HierarchyNode> nodes);

  int root() const { return root_; }
  const HierarchyNode& node(int id) const;
  HierarchyNode& node(int id);
  int depth(int id) const { return depth_.at(id); }
  int parent(int id) const { return parent_.at(id); }
  /// Every node once, deepest first, ties by increasing id.
  const std::vector<int>& traversal() const { return order_; }
  const std::vector<HierarchyNode>& nodes() const { return nodes_; }
  std::vector<HierarchyNode>& nodes() { return nodes_; }

  /// Detection preconditions: RGB leaf motifs, child-count channels on the
  /// others, masks matching their motifs. Throws ConfigError.
  void check_motifs() const;

 private:
  std::vector<HierarchyNode> nodes_;
  std::map<int, std::size_t> index_;
  std::map<int, int> depth_;
  std::map<int, int> parent_;
  std::vector<int> order_;
  int root_ = -1;
};

/// {(i dh, j dw)} inside a rows x cols grid.
std::vector<Eigen::Vector2d> stride_grid(int rows, int cols, int dh, int dw);

struct AnchorResult {
  Eigen::Vector2d lambda = Eigen::Vector2d::Zero();
  TransformParams params;  // maps the motif grid into the scene, centered at the motif center
  double loss = 0.0;
  bool skipped = false;    // removed by the prescreen

  /// Where the motif center lands: lambda + b.
  Eigen::Vector2d location() const { return lambda + params.b; }
};

/// Leaf registration at every anchor; the scene is smoothed with the node's
/// input variance for the coarse phase and used as is for the fine phase.
std::vector<AnchorResult> register_visual_at_strides(const Image& scene, const HierarchyNode& node);

/// Spike registration of the node motif against aggregated child maps.
std::vector<AnchorResult> register_spike_at_strides(const Image& features, const HierarchyNode& node);

/// Theorem step sizes (t_A, t_b) at sigma2 from the node motif's channel
/// centroids; channel counts below 3 use the largest singular value only.
std::pair<double, double> spike_node_steps(const Image& motif, double sigma2);

/// Sum of sigma0^2 density bumps at lambda + b (|b| clamped to the motif
/// diagonal) with amplitude exp(-alpha max(0, loss - gamma)), optionally
/// merged by merge_radius.
Image occurrence_map(int rows, int cols, const std::vector<AnchorResult>& anchors, const HierarchyNode& node);

/// Child maps stacked as channels in increasing child id.
Image aggregate_children(const std::map<int, Image>& child_maps, const HierarchyNode& node);

struct NodeDetection {
  std::vector<AnchorResult> anchors;
  Image occurrence;
  Image features;  // aggregated child maps (non-leaves only)
  int best = -1;   // anchor with the lowest loss
};

struct DetectionResult {
  Image omega0;
  std::map<int, NodeDetection> nodes;
  double peak = 0.0;
  Eigen::Vector2d peak_location = Eigen::Vector2d::Zero();
};

/// Density peak of the node's bumps, 1 / (2 pi sigma0^2).
double bump_peak(const HierarchyNode& node);

/// Detection threshold on omega0: fraction of the root bump peak.
double detection_threshold(const Hierarchy& h, double fraction = 0.5);

/// Depth-descending detection; leaves by visual registration, the others by
/// spike registration on their aggregated children.
DetectionResult detect(const Image& scene, const Hierarchy& h);

/// Non-leaf motif produced by extraction, with its crop origin in the template.
struct ExtractedMotif {
  Image motif;
  SupportMask mask;
  Eigen::Vector2i origin = Eigen::Vector2i::Zero();
};

/// Runs detection on the template and fills in every non-leaf motif, mask and
/// canonical center. Aggregated maps are thresholded at 1/20 of the bump peak,
/// cropped to the bounding box of what remains, padded by `margin` pixels.
std::map<int, ExtractedMotif> extract(const Image& tmpl, Hierarchy& h, int margin = 6);

/// A calibration scene: the template composited by `global` (template frame
/// to scene, including the embed offset).
struct CalibrationScene {
  Image scene;
  TransformParams global;
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();

  /// Scene location of a template-frame point.
  Eigen::Vector2d locate(const Eigen::Vector2d& x) const { return global.apply(x) + offset; }
};

struct CalibrationReport {
  std::map<int, double> gamma;
  std::map<int, ExtractedMotif> extracted;  // filled when a template is given
  std::map<int, double> max_success;
  std::map<int, double> min_failure;
  std::map<int, int> successes;
  std::map<int, int> failures;
};

/// Sets gamma on every node bottom-up from anchors labelled by the distance
/// of their location to the truth (success within success_radius px). Gamma
/// is the midpoint between the largest success loss and the smallest failure
/// loss. Throws CalibrationError naming the node when no threshold separates them.
/// With a template, each non-leaf motif is re-extracted from it just before
/// the node is calibrated, so it sees its children's calibrated maps.
CalibrationReport calibrate(Hierarchy& h, const std::vector<CalibrationScene>& scenes, double success_radius = 2.0,
                            const Image* tmpl = nullptr, int margin = 6);

/// Template rigidly rotated by each angle about its center and composited over clutter.
std::vector<CalibrationScene> rigid_sweep(const Image& tmpl, const SupportMask& support,
                                          const std::vector<double>& rotations, int scene_size,
                                          std::uint64_t seed);

/// Articulated synthetic template scenes: global rotation, part rotations
/// drawn within +/- part_rotation, small random translation.
std::vector<CalibrationScene> articulated_sweep(const TemplateSpec& spec, const std::vector<double>& rotations,
                                                double part_rotation, int scene_size, std::uint64_t seed);

/// Tree 0 -> {1, 4}, 4 -> {2, 3} over the three parts of a synthetic template
/// (leaves 1, 2, 3 are parts 0, 1, 2). Non-leaf motifs are left for extract.
Hierarchy synthetic_hierarchy(const TemplateSpec& spec, const NodeParams& leaf, const NodeParams& spike);

/// Defaults tuned for the synthetic template at small scene sizes.
NodeParams synthetic_leaf_params();
NodeParams synthetic_spike_params();

}  // namespace invreg
