#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "invreg/errors.hpp"
#include "invreg/hierarchy.hpp"
#include "invreg/scenegen.hpp"

using namespace invreg;

namespace {

HierarchyNode leaf(int id, const Image& motif, const NodeParams& p = {}) {
  HierarchyNode n;
  n.id = id;
  n.motif = motif;
  n.mask = SupportMask(motif.rows(), motif.cols(), true);
  n.params = p;
  return n;
}

HierarchyNode inner(int id, std::vector<int> children, const NodeParams& p = {}) {
  HierarchyNode n;
  n.id = id;
  n.children = std::move(children);
  n.params = p;
  return n;
}

AnchorResult anchor_at(const Eigen::Vector2d& lambda, const Eigen::Vector2d& b, double loss) {
  AnchorResult a;
  a.lambda = lambda;
  a.params = TransformParams::identity(MotionModel::euclidean);
  a.params.b = b;
  a.loss = loss;
  return a;
}

double max_of(const Image& img) { return *std::max_element(img.data().begin(), img.data().end()); }

Eigen::Vector2d argmax(const Image& img, int k = 0) {
  Eigen::Vector2d at(0, 0);
  double best = -1.0;
  for (int i = 0; i < img.rows(); ++i)
    for (int j = 0; j < img.cols(); ++j)
      if (img(i, j, k) > best) best = img(i, j, k), at = Eigen::Vector2d(i, j);
  return at;
}

// Copies motif pixels onto the scene with their top-left corner at (i0, j0).
void paste(Image& scene, const Image& motif, int i0, int j0) {
  for (int k = 0; k < motif.channels(); ++k)
    for (int i = 0; i < motif.rows(); ++i)
      for (int j = 0; j < motif.cols(); ++j) scene(i0 + i, j0 + j, k) = motif(i, j, k);
}

NodeParams quick_leaf() {
  NodeParams p;
  p.iters = 60;
  p.fine_iters = 32;
  p.stride_h = p.stride_w = 8;
  p.step_scale = 10.0;
  p.alpha = 50.0;
  return p;
}

// Two-channel spike motif: one density bump per channel.
Image two_spikes(int rows, int cols, const Eigen::Vector2d& a, const Eigen::Vector2d& b, double var) {
  Image m(rows, cols, 2);
  add_bump(m, 0, a, var);
  add_bump(m, 1, b, var);
  return m;
}

}  // namespace

TEST_CASE("stride grid counts") {
  CHECK(stride_grid(100, 100, 20, 20).size() == 25);
  CHECK(stride_grid(7, 5, 1, 1).size() == 35);
  CHECK(stride_grid(512, 384, 20, 20).size() == 520);
  const auto g = stride_grid(10, 10, 4, 6);
  CHECK(g.size() == 6);
  CHECK(g.back() == Eigen::Vector2d(8, 6));
  CHECK_THROWS_AS(stride_grid(10, 10, 0, 1), ConfigError);
}

TEST_CASE("hierarchy validation and traversal") {
  const Image rgb(5, 5, 3, 0.5);
  Hierarchy h({inner(0, {1, 4}), leaf(1, rgb), leaf(2, rgb), leaf(3, rgb), inner(4, {3, 2})});
  CHECK(h.root() == 0);
  CHECK(h.traversal() == std::vector<int>{2, 3, 1, 4, 0});
  CHECK(h.depth(2) == 2);
  CHECK(h.parent(3) == 4);
  CHECK_THROWS_AS(Hierarchy({leaf(1, rgb), leaf(1, rgb)}), ConfigError);
  CHECK_THROWS_AS(Hierarchy({inner(0, {1}), leaf(2, rgb)}), ConfigError);
  CHECK_THROWS_AS(Hierarchy({inner(0, {1}), inner(1, {0})}), ConfigError);
  CHECK_THROWS_AS(Hierarchy({leaf(0, rgb), leaf(1, rgb)}), ConfigError);
  CHECK_THROWS_AS(Hierarchy({inner(0, {1, 2}), inner(1, {2}), leaf(2, rgb)}), ConfigError);
  NodeParams bad;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(Hierarchy({leaf(0, rgb, bad)}), ConfigError);
  bad = {};
  bad.gamma = -1.0;
  CHECK_THROWS_AS(Hierarchy({leaf(0, rgb, bad)}), ConfigError);
  // Non-leaf motifs must carry one channel per child.
  Hierarchy g({inner(0, {1, 2}), leaf(1, rgb), leaf(2, rgb)});
  CHECK_THROWS_AS(g.check_motifs(), ConfigError);
  g.node(0).motif = Image(6, 6, 2);
  g.node(0).mask = SupportMask(6, 6, true);
  CHECK_NOTHROW(g.check_motifs());
}

TEST_CASE("occurrence map amplitudes") {
  NodeParams p;
  p.alpha = 2.0;
  p.gamma = 0.5;
  const HierarchyNode node = leaf(1, Image(9, 9, 3), p);
  const double peak = bump_peak(node);
  CHECK(peak == doctest::Approx(1.0 / (2.0 * std::numbers::pi * 9.0)));

  Image full = occurrence_map(40, 40, {anchor_at({20, 20}, {0, 0}, 0.3)}, node);
  CHECK(full(20, 20) == doctest::Approx(peak).epsilon(1e-12));
  Image half = occurrence_map(40, 40, {anchor_at({20, 20}, {0, 0}, 0.5 + std::log(2.0) / 2.0)}, node);
  CHECK(half(20, 20) == doctest::Approx(peak / 2).epsilon(1e-12));

  // Two anchors converging to the same point add up.
  Image two = occurrence_map(40, 40, {anchor_at({16, 20}, {4, 0}, 0.0), anchor_at({20, 24}, {0, -4}, 0.0)}, node);
  CHECK(two(20, 20) == doctest::Approx(2 * peak).epsilon(1e-12));
  HierarchyNode merged = node;
  merged.params.merge_radius = 1.0;
  Image one = occurrence_map(40, 40, {anchor_at({16, 20}, {4, 0}, 0.1), anchor_at({20, 24}, {0, -4}, 0.0)}, merged);
  CHECK(one(20, 20) == doctest::Approx(peak).epsilon(1e-12));

  // Divergent offsets are clamped to the motif diagonal.
  const double diag = std::hypot(9.0, 9.0);
  Image far = occurrence_map(60, 60, {anchor_at({10, 10}, {1000, 0}, 0.0)}, node);
  CHECK((argmax(far) - Eigen::Vector2d(10 + std::round(diag), 10)).norm() <= 0.5);

  // Skipped and non-finite anchors contribute nothing.
  AnchorResult skipped = anchor_at({20, 20}, {0, 0}, 0.0);
  skipped.skipped = true;
  AnchorResult nan_b = anchor_at({20, 20}, {std::nan(""), 0}, 0.0);
  CHECK(max_of(occurrence_map(40, 40, {skipped, nan_b}, node)) == 0.0);
}

TEST_CASE("occurrence maps are nonnegative with bounded bump mass") {
  NodeParams p;
  p.alpha = 1.0;
  const HierarchyNode node = leaf(1, Image(9, 9, 3), p);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 60.0), l(0.0, 3.0);
  std::vector<AnchorResult> anchors;
  for (int t = 0; t < 30; ++t) anchors.push_back(anchor_at({u(rng), u(rng)}, {l(rng), -l(rng)}, l(rng)));
  const Image w = occurrence_map(60, 60, anchors, node);
  double mass = 0.0, bound = 0.0;
  for (double v : w.data()) {
    CHECK(v >= 0.0);
    mass += v;
  }
  for (const AnchorResult& a : anchors) bound += std::exp(-a.loss);
  CHECK(mass <= bound * (1 + 1e-9));
}

TEST_CASE("aggregation stacks children by increasing id") {
  Image a(8, 8, 1), b(8, 8, 1);
  a(1, 1) = 3.0;
  b(2, 2) = 5.0;
  const HierarchyNode one = inner(0, {7});
  const Image single = aggregate_children({{7, a}}, one);
  CHECK(single.channels() == 1);
  CHECK(single(1, 1) == 3.0);
  const HierarchyNode two = inner(0, {9, 4});
  const Image y = aggregate_children({{9, b}, {4, a}}, two);
  CHECK(y(1, 1, 0) == 3.0);
  CHECK(y(2, 2, 1) == 5.0);
  CHECK(sum(y.channel(0)) == sum(a));
  CHECK(sum(y.channel(1)) == sum(b));
  CHECK_THROWS_AS(aggregate_children({{9, b}}, two), ConfigError);
  CHECK_THROWS_AS(aggregate_children({{9, b}, {4, Image(7, 8, 1)}}, two), ConfigError);
}

TEST_CASE("spike registration at strides") {
  const double var = 9.0;
  const int m = 31, n = 41;
  const Eigen::Vector2d c = grid_center(m, n);
  const Eigen::Vector2d p0(15, 8), p1(15, 32);
  NodeParams prm;
  prm.iters = 256;
  prm.stride_h = prm.stride_w = 40;
  prm.sigma2 = 0.0;
  prm.step_scale = 0.2;
  HierarchyNode node = inner(0, {1, 2}, prm);
  node.motif = two_spikes(m, n, p0, p1, var);
  node.mask = SupportMask(m, n, true);
  const Eigen::Vector2d lambda(40, 40);

  SUBCASE("identity pose reaches zero loss at the canonical anchor") {
    const Image y = two_spikes(80, 80, lambda - c + p0, lambda - c + p1, var);
    const auto res = register_spike_at_strides(y, node);
    REQUIRE(res.size() == 4);
    const AnchorResult& at = res[3];
    CHECK(at.lambda == lambda);
    CHECK(at.loss <= 1e-8);
    CHECK(at.location().isApprox(lambda, 1e-6));
  }
  SUBCASE("rotated pattern recovers the angle") {
    const double theta = std::numbers::pi / 8;
    const Eigen::Matrix2d R = rotation(theta);
    const Image y = two_spikes(80, 80, lambda + R * (p0 - c), lambda + R * (p1 - c), var);
    const auto res = register_spike_at_strides(y, node);
    const AnchorResult& at = res[3];
    CHECK(std::abs(at.params.theta() - theta) <= 0.02);
    CHECK(at.location().isApprox(lambda, 1e-2));
  }
  SUBCASE("prescreen skips empty anchors") {
    node.params.prescreen = true;
    const Image y = two_spikes(80, 80, lambda - c + p0, lambda - c + p1, var);
    const auto res = register_spike_at_strides(y, node);
    CHECK(res[0].skipped);
    CHECK(!res[3].skipped);
    CHECK(res[3].loss <= 1e-8);
  }
}

TEST_CASE("spike node steps scale with the motif mass") {
  const Image m = two_spikes(31, 41, {15, 8}, {15, 32}, 9.0);
  const auto [tA, tb] = spike_node_steps(m, 18.0);
  const auto [tA2, tb2] = spike_node_steps(2.0 * m, 18.0);
  CHECK(tA2 == doctest::Approx(tA / 4));
  CHECK(tb2 == doctest::Approx(tb / 4));
  CHECK_THROWS_AS(spike_node_steps(Image(5, 5, 2), 18.0), NumericDomainError);
}

TEST_CASE("visual registration at an exact anchor") {
  const TexturedMotif tm = textured_motif(17, 17, 3);
  Image scene = clutter(64, 64, 8);
  paste(scene, tm.image, 24, 24);  // motif center lands on anchor (32, 32)
  NodeParams p;
  p.iters = 10;
  p.fine_iters = 256;
  p.step_scale = 10.0;
  p.stride_h = p.stride_w = 16;
  HierarchyNode node = leaf(1, tm.image, p);
  const auto res = register_visual_at_strides(scene, node);
  REQUIRE(res.size() == 16);
  std::vector<double> others;
  double at = -1.0;
  for (const AnchorResult& a : res) {
    if (a.lambda == Eigen::Vector2d(32, 32)) at = a.loss;
    else others.push_back(a.loss);
  }
  std::nth_element(others.begin(), others.begin() + others.size() / 2, others.end());
  CHECK(at >= 0.0);
  CHECK(at <= 1e-6 * others[others.size() / 2]);
  // Anchors share no state: a second run is bit-identical.
  const auto again = register_visual_at_strides(scene, node);
  for (std::size_t i = 0; i < res.size(); ++i) CHECK(again[i].loss == res[i].loss);
  CHECK_THROWS_AS(register_visual_at_strides(scene, inner(0, {1})), ConfigError);
}

TEST_CASE("detection is covariant to stride-sized shifts") {
  const TexturedMotif tm = textured_motif(17, 17, 5);
  Image big = clutter(112, 112, 21);
  paste(big, tm.image, 42, 46);
  auto crop = [&](int i0, int j0) {
    Image s(72, 72, 3);
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 72; ++i)
        for (int j = 0; j < 72; ++j) s(i, j, k) = big(i0 + i, j0 + j, k);
    return s;
  };
  const Hierarchy h({leaf(0, tm.image, quick_leaf())});
  const DetectionResult a = detect(crop(16, 16), h);
  const DetectionResult b = detect(crop(8, 8), h);
  CHECK(a.peak > detection_threshold(h));
  CHECK((b.peak_location - a.peak_location - Eigen::Vector2d(8, 8)).norm() == 0.0);
  CHECK((a.peak_location - Eigen::Vector2d(42 - 16 + 8, 46 - 16 + 8)).norm() <= 1.5);
}

TEST_CASE("calibration thresholds") {
  const TexturedMotif tm = textured_motif(17, 17, 7);
  const Eigen::Vector2d c = grid_center(17, 17);

  SUBCASE("separable single motif") {
    Hierarchy h({leaf(0, tm.image, quick_leaf())});
    h.node(0).mask = tm.mask;
    h.node(0).canonical_center = c;
    const auto scenes = rigid_sweep(tm.image, tm.mask, {0.0, 0.15}, 64, 3);
    const CalibrationReport rep = calibrate(h, scenes);
    CHECK(rep.successes.at(0) > 0);
    CHECK(rep.failures.at(0) > 0);
    CHECK(rep.max_success.at(0) < rep.gamma.at(0));
    CHECK(rep.gamma.at(0) < rep.min_failure.at(0));
    CHECK(h.node(0).params.gamma == rep.gamma.at(0));
  }
  SUBCASE("no failures puts gamma just above the successes") {
    Hierarchy h({leaf(0, tm.image, quick_leaf())});
    h.node(0).canonical_center = c;
    const auto scenes = rigid_sweep(tm.image, tm.mask, {0.0}, 48, 3);
    const CalibrationReport rep = calibrate(h, scenes, 1e9);
    CHECK(rep.failures.at(0) == 0);
    CHECK(rep.gamma.at(0) > rep.max_success.at(0));
    CHECK(rep.gamma.at(0) <= rep.max_success.at(0) * (1 + 1e-8) + 1e-300);
  }
  SUBCASE("twin motifs cannot be separated") {
    Image twin(17, 42, 3);
    SupportMask support(17, 42);
    paste(twin, tm.image, 0, 0);
    paste(twin, tm.image, 0, 25);
    for (int i = 0; i < 17; ++i)
      for (int j = 0; j < 17; ++j)
        if (tm.mask.contains(i, j)) support.set(i, j), support.set(i, j + 25);
    Hierarchy h({leaf(0, tm.image, quick_leaf())});
    h.node(0).mask = tm.mask;
    // Canonical center of the left copy in the twin frame.
    h.node(0).canonical_center = c;
    const auto scenes = rigid_sweep(twin, support, {0.0, 0.3}, 72, 5);
    try {
      calibrate(h, scenes);
      FAIL("expected non-separability");
    } catch (const CalibrationError& e) {
      CHECK(std::string(e.what()).find("no separating threshold") != std::string::npos);
    }
  }
}

TEST_CASE("extraction places child bumps at their canonical offsets") {
  const TexturedMotif m1 = textured_motif(11, 11, 31), m2 = textured_motif(11, 11, 32);
  Image tmpl(48, 48, 3);
  paste(tmpl, m1.image, 6, 6);
  paste(tmpl, m2.image, 30, 26);
  NodeParams lp = quick_leaf();
  lp.stride_h = lp.stride_w = 6;
  lp.merge_radius = 4.0;
  NodeParams sp;
  sp.sigma2 = 0.0;
  Hierarchy h({inner(0, {1, 2}, sp), leaf(1, m1.image, lp), leaf(2, m2.image, lp)});
  Hierarchy h2 = h;
  const auto out = extract(tmpl, h);
  REQUIRE(out.size() == 1);
  const ExtractedMotif& e = out.at(0);
  CHECK(e.motif.channels() == 2);
  const Eigen::Vector2d origin = e.origin.cast<double>();
  CHECK((argmax(e.motif, 0) + origin - Eigen::Vector2d(11, 11)).norm() <= 1.0);
  CHECK((argmax(e.motif, 1) + origin - Eigen::Vector2d(35, 31)).norm() <= 1.0);
  const double thr = bump_peak(h.node(1)) / 20.0;
  for (double v : e.motif.data()) CHECK((v == 0.0 || v >= thr));
  CHECK(h.node(0).motif.rows() == e.motif.rows());
  CHECK(h.node(0).canonical_center == origin + grid_center(e.motif.rows(), e.motif.cols()));
  // Idempotent.
  const auto again = extract(tmpl, h2);
  CHECK(again.at(0).motif.data() == e.motif.data());
  CHECK(again.at(0).origin == e.origin);

  Hierarchy lone({leaf(0, m1.image, lp)});
  CHECK(extract(tmpl, lone).empty());
}
