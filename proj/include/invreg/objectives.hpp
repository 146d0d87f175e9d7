#pragma once

#include <memory>
#include <optional>

#include <Eigen/Core>

#include "invreg/gaussian.hpp"
#include "invreg/image.hpp"
#include "invreg/transform.hpp"

namespace invreg {

/// Scene, motif, and where the motif grid sits relative to the scene.
///
/// The motif occupies an m x n grid whose pixel q is the motif-frame point q;
/// a transform maps it to the scene point A(q - center) + b + center + anchor.
struct RegistrationProblem {
  Image scene;
  Image motif;
  SupportMask mask;  // motif-grid support; empty means all pixels
  double sigma2 = 1.0;
  Eigen::Vector2d anchor = Eigen::Vector2d::Zero();
  /// Transform center in motif-frame coordinates; the grid center if unset.
  std::optional<Eigen::Vector2d> center_point;

  int rows() const { return motif.rows(); }
  int cols() const { return motif.cols(); }
  Eigen::Vector2d center() const { return center_point ? *center_point : grid_center(rows(), cols()); }
  SupportMask effective_mask() const;
  /// Throws ConfigError on inconsistent shapes or channel counts.
  void validate() const;
};

struct FieldEvaluation {
  double value = 0.0;
  DeformationField grad;  // empty unless requested
};

/// 1/2 |P_Omega[g * (y o tau - x_o)]|^2 on the motif grid.
FieldEvaluation basic_objective(const RegistrationProblem& prob, const DeformationField& field,
                                bool with_grad = true);

/// Objective value and gradients with respect to (A, b) and, for the
/// background model, the background image.
struct Evaluation {
  double value = 0.0;
  Eigen::Matrix2d gA = Eigen::Matrix2d::Zero();
  Eigen::Vector2d gb = Eigen::Vector2d::Zero();
  Image gbeta;
};

/// Common interface the solver drives.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual Evaluation evaluate(const TransformParams& p, const Image* beta, bool with_grad) const = 0;
  double value(const TransformParams& p, const Image* beta = nullptr) const {
    return evaluate(p, beta, false).value;
  }

  /// Center about which the objective expects its parameters.
  virtual Eigen::Vector2d center() const = 0;
  /// Scene warped onto the motif grid by p, for similarity checks.
  virtual Image warped(const TransformParams& p) const = 0;
  virtual const Image& motif() const = 0;
  virtual const SupportMask& mask() const = 0;

  virtual bool has_background() const { return false; }
  virtual Image initial_background(const TransformParams&) const { return {}; }
  /// Carries a background from another scale onto this objective's canvas.
  virtual Image regrid_background(const Image& beta) const { return beta; }
};

class BasicObjective final : public Objective {
 public:
  explicit BasicObjective(RegistrationProblem prob);
  Evaluation evaluate(const TransformParams& p, const Image* beta, bool with_grad) const override;
  Eigen::Vector2d center() const override { return prob_.center(); }
  Image warped(const TransformParams& p) const override;
  const Image& motif() const override { return prob_.motif; }
  const SupportMask& mask() const override { return mask_; }
  const RegistrationProblem& problem() const { return prob_; }
  FieldGeometry geometry() const;

 private:
  RegistrationProblem prob_;
  SupportMask mask_;
};

/// Gaussian-weighted average over motif-frame shifts of the masked residual,
/// evaluated through the precomputed convolutional form:
/// 2 phi = <(y o tau)^2, g * P[1]> + <g, 1> |P x|^2 - 2 <y o tau, g * P x>
/// with y o tau sampled on the motif grid dilated by the filter radius.
class CostSmoothedObjective final : public Objective {
 public:
  explicit CostSmoothedObjective(RegistrationProblem prob);
  Evaluation evaluate(const TransformParams& p, const Image* beta, bool with_grad) const override;
  Eigen::Vector2d center() const override { return prob_.center(); }
  Image warped(const TransformParams& p) const override;
  const Image& motif() const override { return prob_.motif; }
  const SupportMask& mask() const override { return mask_; }

  const GaussianFilter& filter() const { return filter_; }
  /// Geometry of the dilated grid the scene is sampled on.
  FieldGeometry extended_geometry() const;

 private:
  RegistrationProblem prob_;
  SupportMask mask_;
  GaussianFilter filter_;
  Image g_mask_;    // g * P[1] on the extended grid
  Image g_motif_;   // g * P[x_o] on the extended grid
  double constant_ = 0.0;
};

/// 1/2 |P_dil[g * (y o tau - x_o - P_c[g_C * beta])]|^2 on a canvas that pads
/// the motif by ceil(5 sigma) per side.
class BackgroundObjective final : public Objective {
 public:
  struct Options {
    double coarse_factor = 4.0;
    /// Dilation radius of the residual mask in units of sigma.
    double dilation_sigmas = 2.0;
    /// Canvas padding in units of sigma.
    double padding_sigmas = 5.0;
  };

  BackgroundObjective(RegistrationProblem prob, Options opt);
  explicit BackgroundObjective(RegistrationProblem prob) : BackgroundObjective(std::move(prob), Options{}) {}

  Evaluation evaluate(const TransformParams& p, const Image* beta, bool with_grad) const override;
  /// Field-level form on the canvas grid.
  FieldEvaluation evaluate_field(const DeformationField& field, const Image& beta, bool with_grad,
                                 Image* gbeta) const;

  Eigen::Vector2d center() const override { return prob_.center(); }
  Image warped(const TransformParams& p) const override;
  const Image& motif() const override { return prob_.motif; }
  const SupportMask& mask() const override { return mask_; }
  bool has_background() const override { return true; }
  Image initial_background(const TransformParams& p) const override;
  Image regrid_background(const Image& beta) const override;

  int padding() const { return pad_; }
  FieldGeometry canvas_geometry() const;
  const SupportMask& residual_mask() const { return dilated_; }
  /// Replaces the dilated residual mask (must be canvas-shaped).
  void set_residual_mask(SupportMask m);
  const SupportMask& canvas_mask() const { return canvas_mask_; }

 private:
  RegistrationProblem prob_;
  Options opt_;
  SupportMask mask_;
  int pad_ = 0;
  Image canvas_motif_;
  SupportMask canvas_mask_;
  SupportMask complement_;
  SupportMask dilated_;
  GaussianFilter g_;
  GaussianFilter g_coarse_;
};

/// Complementary-smoothing spike objective
/// (1/2c) |P[g(At) * (y_s o tau_{At,bt}) - xhat]|^2 with
/// g(At) = sqrt(det(At^T At)) g_{sigma^2 I - sigma0^2 (At^T At)^-1}.
/// With inverse parameterization the iterate (A, b) enters as
/// (At, bt) = (A^-1, -A^-1 b).
class SpikeObjective final : public Objective {
 public:
  struct Options {
    double sigma0_2 = 9.0;
    /// Inputs are already sigma0-smoothed: the scene is used as is and the
    /// motif filter variance is reduced by sigma0^2.
    bool presmoothed = true;
    bool inverse = true;
  };

  SpikeObjective(RegistrationProblem prob, Options opt);

  Evaluation evaluate(const TransformParams& p, const Image* beta, bool with_grad) const override;
  Eigen::Vector2d center() const override { return prob_.center(); }
  Image warped(const TransformParams& p) const override;
  const Image& motif() const override { return prob_.motif; }
  const SupportMask& mask() const override { return mask_; }

  /// Standard-parameter (At, bt) for an iterate.
  TransformParams standard(const TransformParams& p) const;
  const Options& options() const { return opt_; }
  int filter_side() const { return side_; }

 private:
  RegistrationProblem prob_;
  Options opt_;
  SupportMask mask_;
  Image smoothed_scene_;
  Image target_;
  int side_ = 1;
};

}  // namespace invreg
