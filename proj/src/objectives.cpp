#include "invreg/objectives.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "invreg/errors.hpp"
#include "invreg/interpolation.hpp"

namespace invreg {

namespace {

// Per-pixel sum over channels of weight_k * dy_k for both field components.
DeformationField chain_to_field(const Image& weight, const WarpWithGradient& w) {
  DeformationField g(weight.rows(), weight.cols());
  for (int k = 0; k < weight.channels(); ++k) {
    auto wk = weight.plane(k);
    auto d0 = w.d0.plane(k);
    auto d1 = w.d1.plane(k);
    for (std::size_t i = 0; i < wk.size(); ++i) {
      g.t0[i] += wk[i] * d0[i];
      g.t1[i] += wk[i] * d1[i];
    }
  }
  return g;
}

// Elementwise product with a single-channel image broadcast over channels.
Image times_plane(const Image& x, const Image& plane) {
  Image out = x;
  for (int k = 0; k < x.channels(); ++k) {
    auto p = out.plane(k);
    auto s = plane.plane(0);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] *= s[i];
  }
  return out;
}

}  // namespace

SupportMask RegistrationProblem::effective_mask() const {
  if (mask.rows() == 0) return SupportMask(rows(), cols(), true);
  return mask;
}

void RegistrationProblem::validate() const {
  if (motif.empty() || scene.empty()) throw ConfigError("problem needs a scene and a motif");
  if (motif.channels() != scene.channels()) throw ConfigError("scene and motif channel counts differ");
  if (mask.rows() != 0 && (mask.rows() != motif.rows() || mask.cols() != motif.cols()))
    throw ConfigError("mask shape does not match motif");
  if (!(sigma2 > 0.0)) throw ConfigError("smoothing variance must be positive");
}

FieldEvaluation basic_objective(const RegistrationProblem& prob, const DeformationField& field, bool with_grad) {
  prob.validate();
  if (field.rows != prob.rows() || field.cols != prob.cols()) throw ConfigError("field shape does not match motif");
  const GaussianFilter g = GaussianFilter::isotropic(prob.sigma2);
  const SupportMask mask = prob.effective_mask();
  FieldEvaluation out;
  if (!with_grad) {
    Image r = mask.project(convolve(interpolate(prob.scene, field) - prob.motif, g));
    out.value = 0.5 * squared_norm(r);
    return out;
  }
  const WarpWithGradient w = interpolate_with_gradient(prob.scene, field);
  Image r = mask.project(convolve(w.value - prob.motif, g));
  out.value = 0.5 * squared_norm(r);
  out.grad = chain_to_field(convolve(r, g), w);
  return out;
}

BasicObjective::BasicObjective(RegistrationProblem prob) : prob_(std::move(prob)) {
  prob_.validate();
  mask_ = prob_.effective_mask();
}

FieldGeometry BasicObjective::geometry() const { return {prob_.rows(), prob_.cols(), {0, 0}, prob_.anchor}; }

Evaluation BasicObjective::evaluate(const TransformParams& p, const Image*, bool with_grad) const {
  const FieldGeometry geo = geometry();
  const FieldEvaluation fe = basic_objective(prob_, field_from_params(p, geo), with_grad);
  Evaluation e;
  e.value = fe.value;
  if (with_grad) std::tie(e.gA, e.gb) = field_grad_to_params(fe.grad, geo, p.center);
  return e;
}

Image BasicObjective::warped(const TransformParams& p) const {
  return interpolate(prob_.scene, field_from_params(p, geometry()));
}

CostSmoothedObjective::CostSmoothedObjective(RegistrationProblem prob) : prob_(std::move(prob)) {
  prob_.validate();
  mask_ = prob_.effective_mask();
  filter_ = GaussianFilter::isotropic(prob_.sigma2);
  const int h = filter_.half();
  const int er = prob_.rows() + 2 * h, ec = prob_.cols() + 2 * h;
  const Image masked = mask_.project(prob_.motif);
  g_mask_ = convolve(mask_.as_image().placed(er, ec, h, h), filter_);
  g_motif_ = convolve(masked.placed(er, ec, h, h), filter_);
  constant_ = filter_.mass() * squared_norm(masked);
}

FieldGeometry CostSmoothedObjective::extended_geometry() const {
  const int h = filter_.half();
  return {prob_.rows() + 2 * h, prob_.cols() + 2 * h, {double(-h), double(-h)}, prob_.anchor};
}

Evaluation CostSmoothedObjective::evaluate(const TransformParams& p, const Image*, bool with_grad) const {
  const FieldGeometry geo = extended_geometry();
  const DeformationField field = field_from_params(p, geo);
  Evaluation e;
  auto accumulate = [&](const Image& z) {
    double quad = 0.0, lin = 0.0;
    auto gm = g_mask_.plane(0);
    for (int k = 0; k < z.channels(); ++k) {
      auto zk = z.plane(k);
      auto xk = g_motif_.plane(k);
      for (std::size_t i = 0; i < zk.size(); ++i) {
        quad += zk[i] * zk[i] * gm[i];
        lin += zk[i] * xk[i];
      }
    }
    return 0.5 * (quad + constant_ - 2.0 * lin);
  };
  if (!with_grad) {
    e.value = accumulate(interpolate(prob_.scene, field));
    return e;
  }
  const WarpWithGradient w = interpolate_with_gradient(prob_.scene, field);
  e.value = accumulate(w.value);
  Image weight = times_plane(w.value, g_mask_) - g_motif_;
  std::tie(e.gA, e.gb) = field_grad_to_params(chain_to_field(weight, w), geo, p.center);
  return e;
}

Image CostSmoothedObjective::warped(const TransformParams& p) const {
  return interpolate(prob_.scene, field_from_params(p, {prob_.rows(), prob_.cols(), {0, 0}, prob_.anchor}));
}

BackgroundObjective::BackgroundObjective(RegistrationProblem prob, Options opt)
    : prob_(std::move(prob)), opt_(opt) {
  prob_.validate();
  if (!(opt_.coarse_factor > 1.0)) throw ConfigError("background coarse factor must exceed 1");
  mask_ = prob_.effective_mask();
  const double sigma = std::sqrt(prob_.sigma2);
  pad_ = static_cast<int>(std::ceil(opt_.padding_sigmas * sigma));
  const int cr = prob_.rows() + 2 * pad_, cc = prob_.cols() + 2 * pad_;
  canvas_motif_ = prob_.motif.placed(cr, cc, pad_, pad_);
  canvas_mask_ = mask_.placed(cr, cc, pad_, pad_);
  complement_ = canvas_mask_.complement();
  dilated_ = dilate(canvas_mask_, opt_.dilation_sigmas * sigma);
  g_ = GaussianFilter::isotropic(prob_.sigma2);
  g_coarse_ = GaussianFilter::isotropic(opt_.coarse_factor * prob_.sigma2);
}

FieldGeometry BackgroundObjective::canvas_geometry() const {
  return {prob_.rows() + 2 * pad_, prob_.cols() + 2 * pad_, {double(-pad_), double(-pad_)}, prob_.anchor};
}

void BackgroundObjective::set_residual_mask(SupportMask m) {
  if (m.rows() != canvas_mask_.rows() || m.cols() != canvas_mask_.cols())
    throw ConfigError("residual mask must match the canvas");
  dilated_ = std::move(m);
}

FieldEvaluation BackgroundObjective::evaluate_field(const DeformationField& field, const Image& beta, bool with_grad,
                                                    Image* gbeta) const {
  const FieldGeometry geo = canvas_geometry();
  if (field.rows != geo.rows || field.cols != geo.cols) throw ConfigError("field does not match canvas");
  if (beta.rows() != geo.rows || beta.cols() != geo.cols || beta.channels() != prob_.motif.channels())
    throw ConfigError("background does not match canvas");
  const Image bg = complement_.project(convolve(beta, g_coarse_));
  FieldEvaluation out;
  WarpWithGradient w;
  if (with_grad)
    w = interpolate_with_gradient(prob_.scene, field);
  else
    w.value = interpolate(prob_.scene, field);
  const Image r = dilated_.project(convolve(w.value - canvas_motif_ - bg, g_));
  out.value = 0.5 * squared_norm(r);
  if (!with_grad) return out;
  const Image G = convolve(r, g_);
  out.grad = chain_to_field(G, w);
  if (gbeta) {
    *gbeta = convolve(complement_.project(G), g_coarse_);
    *gbeta *= -1.0;
  }
  return out;
}

Evaluation BackgroundObjective::evaluate(const TransformParams& p, const Image* beta, bool with_grad) const {
  const FieldGeometry geo = canvas_geometry();
  Image zero;
  if (!beta) {
    zero = Image(geo.rows, geo.cols, prob_.motif.channels());
    beta = &zero;
  }
  Evaluation e;
  const FieldEvaluation fe = evaluate_field(field_from_params(p, geo), *beta, with_grad, with_grad ? &e.gbeta : nullptr);
  e.value = fe.value;
  if (with_grad) std::tie(e.gA, e.gb) = field_grad_to_params(fe.grad, geo, p.center);
  return e;
}

Image BackgroundObjective::warped(const TransformParams& p) const {
  return interpolate(prob_.scene, field_from_params(p, {prob_.rows(), prob_.cols(), {0, 0}, prob_.anchor}));
}

Image BackgroundObjective::initial_background(const TransformParams& p) const {
  return convolve(interpolate(prob_.scene, field_from_params(p, canvas_geometry())) - canvas_motif_, g_);
}

Image BackgroundObjective::regrid_background(const Image& beta) const {
  const FieldGeometry geo = canvas_geometry();
  // Canvases share the motif center, so old and new pads differ symmetrically.
  return beta.placed(geo.rows, geo.cols, (geo.rows - beta.rows()) / 2, (geo.cols - beta.cols()) / 2);
}

SpikeObjective::SpikeObjective(RegistrationProblem prob, Options opt) : prob_(std::move(prob)), opt_(opt) {
  prob_.validate();
  if (opt_.sigma0_2 < 0.0) throw ConfigError("complementary smoothing variance must be nonnegative");
  mask_ = prob_.effective_mask();
  side_ = gaussian_side(std::sqrt(prob_.sigma2));
  if (opt_.presmoothed) {
    smoothed_scene_ = prob_.scene;
    const double rest = prob_.sigma2 - opt_.sigma0_2;
    if (!(rest > 0.0)) throw NumericDomainError("spike smoothing must exceed the presmoothing variance");
    target_ = convolve(prob_.motif, GaussianFilter::isotropic(rest, side_));
  } else {
    smoothed_scene_ = opt_.sigma0_2 > 0.0 ? convolve(prob_.scene, GaussianFilter::isotropic(opt_.sigma0_2)) : prob_.scene;
    target_ = convolve(prob_.motif, GaussianFilter::isotropic(prob_.sigma2));
  }
}

TransformParams SpikeObjective::standard(const TransformParams& p) const {
  if (!opt_.inverse) return p;
  const double det = p.A.determinant();
  if (!(std::abs(det) > 1e-14)) {
    std::ostringstream os;
    os << "singular linear part (det " << det << ")";
    throw NumericDomainError(os.str());
  }
  TransformParams s = p;
  s.A = p.A.inverse();
  s.b = -s.A * p.b;
  return s;
}

Evaluation SpikeObjective::evaluate(const TransformParams& p, const Image*, bool with_grad) const {
  const TransformParams st = standard(p);
  const Eigen::Matrix2d& At = st.A;
  const Eigen::Matrix2d AtA = At.transpose() * At;
  const Eigen::Matrix2d AtAinv = AtA.inverse();
  const Eigen::Matrix2d Sigma = prob_.sigma2 * Eigen::Matrix2d::Identity() - opt_.sigma0_2 * AtAinv;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (Sigma + Sigma.transpose()));
  if (!(es.eigenvalues()(0) > 0.0)) {
    std::ostringstream os;
    os << "spike filter covariance not positive definite: eigenvalue " << es.eigenvalues()(0);
    throw NumericDomainError(os.str());
  }
  const GaussianFilter g(Sigma, side_);
  const double scale = std::sqrt(AtA.determinant());
  const FieldGeometry geo{prob_.rows(), prob_.cols(), {0, 0}, prob_.anchor};
  const DeformationField field = field_from_params(st, geo);
  const double c = prob_.motif.channels();

  WarpWithGradient w;
  if (with_grad)
    w = interpolate_with_gradient(smoothed_scene_, field);
  else
    w.value = interpolate(smoothed_scene_, field);
  Image u = convolve(w.value, g);
  u *= scale;
  Image resid = mask_.project(u - target_);
  Evaluation e;
  e.value = squared_norm(resid) / (2.0 * c);
  if (!with_grad) return e;

  resid *= 1.0 / c;
  Image adj = convolve(resid, g);
  adj *= scale;
  auto [gA, gb] = field_grad_to_params(chain_to_field(adj, w), geo, st.center);

  // Filter-parameter term: V_w = sum_p r(p) z(p - w).
  const int h = g.half(), s = g.side();
  std::vector<double> V(std::size_t(s) * s, 0.0);
  for (int k = 0; k < w.value.channels(); ++k) {
    auto part = correlate_offsets(resid.plane(k), w.value.plane(k), prob_.rows(), prob_.cols(), h);
    for (std::size_t i = 0; i < V.size(); ++i) V[i] += part[i];
  }
  Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
  double S = 0.0;
  for (int a = 0; a < s; ++a)
    for (int bcol = 0; bcol < s; ++bcol) {
      const double vg = V[std::size_t(a) * s + bcol] * scale * g(a, bcol);
      const Eigen::Vector2d wv(a - h, bcol - h);
      M += vg * wv * wv.transpose();
      S += vg;
    }
  const Eigen::Matrix2d Si = Sigma.inverse();
  const Eigen::Matrix2d AiT = At.inverse().transpose();
  gA += opt_.sigma0_2 * AiT * (Si * M * Si - S * Si) * AtAinv + S * AiT;

  if (opt_.inverse) std::tie(gA, gb) = inverse_param_grads(gA, gb, p.A, p.b);
  e.gA = gA;
  e.gb = gb;
  return e;
}

Image SpikeObjective::warped(const TransformParams& p) const {
  return interpolate(prob_.scene, field_from_params(standard(p), {prob_.rows(), prob_.cols(), {0, 0}, prob_.anchor}));
}

}  // namespace invreg
