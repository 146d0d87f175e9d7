#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "invreg/image.hpp"
#include "invreg/transform.hpp"

namespace invreg {

struct TransformSampler {
  MotionModel mode = MotionModel::euclidean;
  double max_translation = 5.0;
  double max_rotation = 0.7853981633974483;  // pi/4
  double min_scale = 0.8;
  double max_scale = 1.25;
};

/// Draws per the mode: translation uniform in the box, rotation uniform,
/// scale uniform, affine A = R(t1) diag(s1, s2) R(t2) with uniform s_i and
/// uniform angles. Every mode carries a translation.
TransformParams sample_transform(const TransformSampler& sampler, std::mt19937_64& rng,
                                 const Eigen::Vector2d& center = Eigen::Vector2d::Zero());

/// Smooth 3-channel noise: white noise filtered at variance 16, normalized to [0, 1].
Image clutter(int rows, int cols, std::uint64_t seed, int channels = 3);

/// Integer offset that places a template grid at the center of a scene grid.
Eigen::Vector2d embed_offset(int scene_rows, int scene_cols, int tmpl_rows, int tmpl_cols);

/// Composites the warped template over the background. The template point x
/// lands at A(x - c) + b + c + embed_offset, with c = params.center. Coverage
/// is the interpolated support indicator; clipped reports any support pixel
/// landing outside the background.
Image embed(const Image& background, const Image& tmpl, const SupportMask& support, const TransformParams& params,
            bool* clipped = nullptr);
Image embed(const Image& background, const Image& tmpl, const TransformParams& params, bool* clipped = nullptr);

/// Coverage of the warped template support on the scene grid.
Image embed_coverage(int rows, int cols, const SupportMask& support, const TransformParams& params);

struct TexturedMotif {
  Image image;
  SupportMask mask;
};

/// High-contrast procedural texture on a lobed blob covering most of the grid.
TexturedMotif textured_motif(int rows, int cols, std::uint64_t seed, double detail_variance = 1.5);

struct PartSpec {
  Image motif;
  SupportMask mask;
  Eigen::Vector2i anchor = Eigen::Vector2i::Zero();  // top-left corner in the template
  double max_rotation = 0.19634954084936207;          // pi/16
};

/// Static body plus articulating parts on a black background.
struct TemplateSpec {
  int rows = 0;
  int cols = 0;
  Image body;
  SupportMask body_mask;
  std::vector<PartSpec> parts;

  Eigen::Vector2d part_center(int k) const;
};

/// Body with three distinct parts: one on top and two side by side below.
TemplateSpec synthetic_template(std::uint64_t seed, int part_size = 16);

struct RenderedTemplate {
  Image image;
  SupportMask support;
};

/// Template-frame rendering with each part rotated/transformed about its own
/// center by the corresponding params (identity when the list is empty).
/// Throws ConfigError on articulation bound violations.
RenderedTemplate render_template(const TemplateSpec& spec, const std::vector<TransformParams>& parts);

/// [sum_k (x_k placed at its anchor) o tau_k + body] o tau_0 composited over background.
Image articulated_observation(const TemplateSpec& spec, const TransformParams& global,
                              const std::vector<TransformParams>& parts, const Image& background);

struct SpikeScene {
  Image motif;
  Image scene;
  TransformParams truth;        // v - c = A*(u - c) + b*, scene spikes u, motif spikes v
  Eigen::Matrix2Xd motif_spikes;
  Eigen::Matrix2Xd scene_spikes;
};

/// Isotropic sigma0 density bumps, one spike per channel; motif spikes uniform
/// with a 10 px margin, scene spikes placed by the inverse of the truth and
/// redrawn until they keep the same margin. With max_kappa > 0, draws repeat until the centered scene spikes have
/// s_max^2 / s_min^2 <= max_kappa.
SpikeScene spike_scene(const TransformSampler& sampler, std::uint64_t seed, int channels = 5, int rows = 61,
                       int cols = 81, double sigma0 = 3.0, double max_kappa = 0.0);

/// Adds a normalized density bump N(mean, var I) to channel k.
void add_bump(Image& image, int k, const Eigen::Vector2d& mean, double var, double amplitude = 1.0);

}  // namespace invreg
