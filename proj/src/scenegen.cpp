#include "invreg/scenegen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "invreg/errors.hpp"
#include "invreg/gaussian.hpp"
#include "invreg/interpolation.hpp"

namespace invreg {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Standardized smooth noise plane: zero mean, unit standard deviation.
Image smooth_noise(int rows, int cols, double variance, std::mt19937_64& rng) {
  const int pad = static_cast<int>(std::ceil(3.0 * std::sqrt(variance)));
  Image raw(rows + 2 * pad, cols + 2 * pad, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : raw.data()) v = normal(rng);
  Image f = convolve(raw, GaussianFilter::isotropic(variance));
  Image out(rows, cols, 1);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = f(i + pad, j + pad);
  double mean = 0.0, sq = 0.0;
  for (double v : out.data()) mean += v;
  mean /= double(out.size());
  for (double v : out.data()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / double(out.size()));
  for (double& v : out.data()) v = sd > 0 ? (v - mean) / sd : 0.0;
  return out;
}

Image warp_inverse(const Image& src, int rows, int cols, const TransformParams& params, const Eigen::Vector2d& offset) {
  // Scene point s samples the source at T^-1(s) = A^-1 (s - offset - b - c) + c.
  const Eigen::Matrix2d Ai = params.A.inverse();
  DeformationField f(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const Eigen::Vector2d s(i, j);
      const Eigen::Vector2d x = Ai * (s - offset - params.b - params.center) + params.center;
      const std::size_t idx = std::size_t(i) * cols + j;
      f.t0[idx] = x(0);
      f.t1[idx] = x(1);
    }
  return interpolate(src, f);
}

void composite(Image& dst, const Image& layer, const Image& coverage) {
  for (int k = 0; k < dst.channels(); ++k)
    for (int i = 0; i < dst.rows(); ++i)
      for (int j = 0; j < dst.cols(); ++j) {
        const double a = std::clamp(coverage(i, j), 0.0, 1.0);
        dst(i, j, k) = dst(i, j, k) * (1.0 - a) + layer(i, j, k);
      }
}

SupportMask lobed_blob(int rows, int cols, std::mt19937_64& rng, double fill) {
  const Eigen::Vector2d c = grid_center(rows, cols);
  const double r0 = fill * 0.5 * std::min(rows, cols);
  const double p1 = uniform(rng, 0, 2 * std::numbers::pi), p2 = uniform(rng, 0, 2 * std::numbers::pi);
  SupportMask m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const double di = i - c(0), dj = j - c(1);
      const double th = std::atan2(di, dj);
      const double r = r0 * (1.0 + 0.12 * std::sin(3 * th + p1) + 0.06 * std::sin(5 * th + p2));
      if (std::hypot(di, dj) <= r) m.set(i, j);
    }
  return m;
}

}  // namespace

TransformParams sample_transform(const TransformSampler& s, std::mt19937_64& rng, const Eigen::Vector2d& center) {
  TransformParams p = TransformParams::identity(s.mode, center);
  switch (s.mode) {
    case MotionModel::translation:
      break;
    case MotionModel::euclidean:
      p.A = rotation(uniform(rng, -s.max_rotation, s.max_rotation));
      break;
    case MotionModel::similarity: {
      const double th = uniform(rng, -s.max_rotation, s.max_rotation);
      p.A = uniform(rng, s.min_scale, s.max_scale) * rotation(th);
      break;
    }
    case MotionModel::affine: {
      const double t1 = uniform(rng, -s.max_rotation, s.max_rotation);
      const double s1 = uniform(rng, s.min_scale, s.max_scale);
      const double s2 = uniform(rng, s.min_scale, s.max_scale);
      const double t2 = uniform(rng, -s.max_rotation, s.max_rotation);
      p.A = rotation(t1) * Eigen::Vector2d(s1, s2).asDiagonal() * rotation(t2);
      break;
    }
  }
  p.b = Eigen::Vector2d(uniform(rng, -s.max_translation, s.max_translation),
                        uniform(rng, -s.max_translation, s.max_translation));
  return p;
}

Image clutter(int rows, int cols, std::uint64_t seed, int channels) {
  std::mt19937_64 rng(seed);
  const int pad = 12;
  Image raw(rows + 2 * pad, cols + 2 * pad, channels);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : raw.data()) v = normal(rng);
  const Image f = convolve(raw, GaussianFilter::isotropic(16.0));
  Image out(rows, cols, channels);
  for (int k = 0; k < channels; ++k)
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) out(i, j, k) = f(i + pad, j + pad, k);
  const auto [lo, hi] = std::minmax_element(out.data().begin(), out.data().end());
  const double a = *lo, span = *hi - *lo;
  for (double& v : out.data()) v = span > 0 ? (v - a) / span : 0.0;
  return out;
}

Eigen::Vector2d embed_offset(int scene_rows, int scene_cols, int tmpl_rows, int tmpl_cols) {
  return {double((scene_rows - tmpl_rows) / 2), double((scene_cols - tmpl_cols) / 2)};
}

Image embed_coverage(int rows, int cols, const SupportMask& support, const TransformParams& params) {
  const Eigen::Vector2d off = embed_offset(rows, cols, support.rows(), support.cols());
  return warp_inverse(support.as_image(), rows, cols, params, off);
}

Image embed(const Image& background, const Image& tmpl, const SupportMask& support, const TransformParams& params,
            bool* clipped) {
  if (tmpl.rows() > background.rows() || tmpl.cols() > background.cols())
    throw ConfigError("template larger than background");
  if (tmpl.channels() != background.channels()) throw ConfigError("template/background channel mismatch");
  if (std::abs(params.A.determinant()) < 1e-12) throw NumericDomainError("embed: singular transform");
  const int m = background.rows(), n = background.cols();
  const Eigen::Vector2d off = embed_offset(m, n, tmpl.rows(), tmpl.cols());
  const Image warped = warp_inverse(support.project(tmpl), m, n, params, off);
  const Image cov = warp_inverse(support.as_image(), m, n, params, off);
  if (clipped) {
    *clipped = false;
    for (int i = 0; i < support.rows() && !*clipped; ++i)
      for (int j = 0; j < support.cols(); ++j) {
        if (!support.contains(i, j)) continue;
        const Eigen::Vector2d s = params.apply(Eigen::Vector2d(i, j)) + off;
        if (s(0) < 0 || s(1) < 0 || s(0) > m - 1 || s(1) > n - 1) {
          *clipped = true;
          break;
        }
      }
  }
  Image out = background;
  composite(out, warped, cov);
  return out;
}

Image embed(const Image& background, const Image& tmpl, const TransformParams& params, bool* clipped) {
  return embed(background, tmpl, SupportMask::nonzero(tmpl), params, clipped);
}

TexturedMotif textured_motif(int rows, int cols, std::uint64_t seed, double detail_variance) {
  std::mt19937_64 rng(seed);
  TexturedMotif t;
  t.mask = lobed_blob(rows, cols, rng, 0.92);
  t.image = Image(rows, cols, 3);
  for (int k = 0; k < 3; ++k) {
    const Image fine = smooth_noise(rows, cols, detail_variance, rng);
    const Image coarse = smooth_noise(rows, cols, 9.0, rng);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        if (t.mask.contains(i, j)) t.image(i, j, k) = std::clamp(0.5 + 0.2 * fine(i, j) + 0.2 * coarse(i, j), 0.0, 1.0);
  }
  return t;
}

Eigen::Vector2d TemplateSpec::part_center(int k) const {
  const PartSpec& p = parts.at(k);
  return Eigen::Vector2d(p.anchor(0), p.anchor(1)) + grid_center(p.motif.rows(), p.motif.cols());
}

TemplateSpec synthetic_template(std::uint64_t seed, int part_size) {
  if (part_size < 8) throw ConfigError("part size too small");
  std::mt19937_64 rng(seed);
  TemplateSpec spec;
  const int gap = part_size / 2;
  spec.rows = spec.cols = 2 * part_size + 3 * gap;
  spec.body = Image(spec.rows, spec.cols, 3);
  spec.body_mask = SupportMask(spec.rows, spec.cols);
  const Eigen::Vector2d c = grid_center(spec.rows, spec.cols);
  const Image shade = smooth_noise(spec.rows, spec.cols, 4.0, rng);
  for (int i = 0; i < spec.rows; ++i)
    for (int j = 0; j < spec.cols; ++j) {
      const double di = (i - c(0)) / (0.5 * spec.rows), dj = (j - c(1)) / (0.5 * spec.cols);
      if (di * di + dj * dj > 0.95) continue;
      spec.body_mask.set(i, j);
      for (int k = 0; k < 3; ++k) spec.body(i, j, k) = std::clamp(0.18 + 0.05 * shade(i, j) + 0.03 * k, 0.0, 1.0);
    }
  const int lo = gap;
  const int hi = 2 * gap + part_size;
  const std::array<Eigen::Vector2i, 3> anchors = {Eigen::Vector2i(lo, (spec.cols - part_size) / 2),
                                                   Eigen::Vector2i(hi, lo), Eigen::Vector2i(hi, hi)};
  for (int k = 0; k < 3; ++k) {
    PartSpec part;
    TexturedMotif t = textured_motif(part_size, part_size, seed * 7919 + 101 * (k + 1), 1.0);
    part.motif = std::move(t.image);
    part.mask = std::move(t.mask);
    part.anchor = anchors[k];
    spec.parts.push_back(std::move(part));
  }
  return spec;
}

RenderedTemplate render_template(const TemplateSpec& spec, const std::vector<TransformParams>& parts) {
  if (!parts.empty() && parts.size() != spec.parts.size()) throw ConfigError("one transform per part required");
  RenderedTemplate r;
  r.image = spec.body_mask.project(spec.body);
  Image support = spec.body_mask.as_image();
  for (std::size_t k = 0; k < spec.parts.size(); ++k) {
    const PartSpec& part = spec.parts[k];
    TransformParams t = parts.empty() ? TransformParams::identity(MotionModel::euclidean) : parts[k];
    if (!parts.empty() && std::abs(t.theta()) > part.max_rotation + 1e-12)
      throw ConfigError("part transform exceeds its articulation bound");
    // Express the part transform in the part's own grid frame.
    const Eigen::Vector2d a(part.anchor(0), part.anchor(1));
    t.center = grid_center(part.motif.rows(), part.motif.cols());
    const Image layer = warp_inverse(part.mask.project(part.motif), spec.rows, spec.cols, t, a);
    const Image cov = warp_inverse(part.mask.as_image(), spec.rows, spec.cols, t, a);
    composite(r.image, layer, cov);
    for (std::size_t i = 0; i < support.size(); ++i) support.data()[i] = std::max(support.data()[i], cov.data()[i]);
  }
  r.support = SupportMask(spec.rows, spec.cols);
  for (int i = 0; i < spec.rows; ++i)
    for (int j = 0; j < spec.cols; ++j)
      if (support(i, j) > 0.5) r.support.set(i, j);
  return r;
}

Image articulated_observation(const TemplateSpec& spec, const TransformParams& global,
                              const std::vector<TransformParams>& parts, const Image& background) {
  const RenderedTemplate t = render_template(spec, parts);
  return embed(background, t.image, t.support, global);
}

void add_bump(Image& image, int k, const Eigen::Vector2d& mean, double var, double amplitude) {
  const double r = 6.0 * std::sqrt(var);
  const double norm = amplitude / (2.0 * std::numbers::pi * var);
  const int i0 = std::max(0, int(std::floor(mean(0) - r))), i1 = std::min(image.rows() - 1, int(std::ceil(mean(0) + r)));
  const int j0 = std::max(0, int(std::floor(mean(1) - r))), j1 = std::min(image.cols() - 1, int(std::ceil(mean(1) + r)));
  for (int i = i0; i <= i1; ++i)
    for (int j = j0; j <= j1; ++j) {
      const double d0 = i - mean(0), d1 = j - mean(1);
      image(i, j, k) += norm * std::exp(-(d0 * d0 + d1 * d1) / (2.0 * var));
    }
}

SpikeScene spike_scene(const TransformSampler& sampler, std::uint64_t seed, int channels, int rows, int cols,
                       double sigma0, double max_kappa) {
  std::mt19937_64 rng(seed);
  SpikeScene s;
  TransformParams t;
  for (;;) {
    s.motif_spikes.resize(2, channels);
    for (int k = 0; k < channels; ++k)
      s.motif_spikes.col(k) = Eigen::Vector2d(uniform(rng, 10.0, rows - 11.0), uniform(rng, 10.0, cols - 11.0));
    t = sample_transform(sampler, rng);
    t.center = s.motif_spikes.rowwise().mean() - t.b;
    const Eigen::Matrix2d Ai = t.A.inverse();
    s.scene_spikes.resize(2, channels);
    for (int k = 0; k < channels; ++k)
      s.scene_spikes.col(k) = t.center + Ai * (s.motif_spikes.col(k) - t.center - t.b);
    // Scene spikes keep the same border margin so no bump is cut by the frame.
    bool inside = true;
    for (int k = 0; k < channels; ++k) {
      const Eigen::Vector2d u = s.scene_spikes.col(k);
      inside = inside && u(0) >= 10.0 && u(0) <= rows - 11.0 && u(1) >= 10.0 && u(1) <= cols - 11.0;
    }
    if (!inside) continue;
    if (max_kappa <= 0.0) break;
    const Eigen::Matrix2Xd U = s.scene_spikes.colwise() - t.center;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(U * U.transpose());
    if (es.eigenvalues()(1) <= max_kappa * es.eigenvalues()(0)) break;
  }
  s.truth = t;
  s.motif = Image(rows, cols, channels);
  s.scene = Image(rows, cols, channels);
  const double var = sigma0 * sigma0;
  for (int k = 0; k < channels; ++k) {
    add_bump(s.motif, k, s.motif_spikes.col(k), var);
    add_bump(s.scene, k, s.scene_spikes.col(k), var);
  }
  return s;
}

}  // namespace invreg
