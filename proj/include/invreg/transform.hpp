#pragma once

#include <array>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "invreg/image.hpp"

namespace invreg {

enum class MotionModel { translation, euclidean, similarity, affine };

int param_dim(MotionModel model);
std::string to_string(MotionModel model);
/// Throws ConfigError on an unknown name.
MotionModel parse_motion_model(const std::string& name);

/// Counter-clockwise rotation [[cos, -sin], [sin, cos]] in (row, col) coordinates.
Eigen::Matrix2d rotation(double theta);

/// tau(x) = A (x - center) + b + center.
struct TransformParams {
  MotionModel model = MotionModel::affine;
  Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  Eigen::Vector2d center = Eigen::Vector2d::Zero();

  static TransformParams identity(MotionModel model, const Eigen::Vector2d& center = Eigen::Vector2d::Zero());
  /// Rotation angle of A (meaningful for euclidean and similarity).
  double theta() const;
  Eigen::Vector2d apply(const Eigen::Vector2d& x) const { return A * (x - center) + b + center; }
  /// Same map expressed about another center.
  TransformParams recentered(const Eigen::Vector2d& new_center) const;
  /// Constraint check for the model: orthogonality, positive scale, invertibility.
  bool satisfies_model(double tol = 1e-10) const;
};

/// ((m-1)/2, (n-1)/2).
Eigen::Vector2d grid_center(int rows, int cols);

/// Where the output grid sits: grid pixel q corresponds to the motif-frame
/// point q + origin, and the transformed point is shifted by anchor.
struct FieldGeometry {
  int rows = 0;
  int cols = 0;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  Eigen::Vector2d anchor = Eigen::Vector2d::Zero();

  static FieldGeometry plain(int rows, int cols) { return {rows, cols, {0, 0}, {0, 0}}; }
};

/// tau(q) = A((q + origin) - center) + b + center + anchor for every grid pixel q.
DeformationField field_from_params(const TransformParams& p, const FieldGeometry& geo);
DeformationField field_from_params(const TransformParams& p, int rows, int cols);

/// Nearest element of the model's linear-part set: identity for translation,
/// polar factor for euclidean, scaled polar factor for similarity, A itself for
/// affine. reflected is set when the polar factor had to absorb det < 0.
Eigen::Matrix2d project_linear(const Eigen::Matrix2d& A, MotionModel model, bool* reflected = nullptr);

/// Orthogonal projection of a field onto the centered affine family, then onto
/// the model. The result is expressed about center.
TransformParams project_field(const DeformationField& field, MotionModel model, const FieldGeometry& geo,
                              const Eigen::Vector2d& center, bool* reflected = nullptr);
/// Plain geometry, centered at the grid center.
TransformParams project_field(const DeformationField& field, MotionModel model, bool* reflected = nullptr);

/// The six centered basis fields: A entries (00, 01, 10, 11) then b (0, 1).
std::array<DeformationField, 6> centered_basis(int rows, int cols);

/// Pulls a per-pixel field gradient back to (A, b): returns
/// (sum G (x - c)^T, sum G) with x the motif-frame coordinate of each pixel.
std::pair<Eigen::Matrix2d, Eigen::Vector2d> field_grad_to_params(const DeformationField& grad,
                                                                 const FieldGeometry& geo,
                                                                 const Eigen::Vector2d& center);

/// d/dtheta of phi(R(theta)) given gradA = grad of phi at R(theta).
double so2_grad(const Eigen::Matrix2d& gradA, double theta);

/// Gradient of (A, b) -> phi(A^-1, -A^-1 b) from the gradient of phi at the
/// standard parameters. Throws NumericDomainError when A is singular.
std::pair<Eigen::Matrix2d, Eigen::Vector2d> inverse_param_grads(const Eigen::Matrix2d& gradA_std,
                                                                const Eigen::Vector2d& gradb_std,
                                                                const Eigen::Matrix2d& A,
                                                                const Eigen::Vector2d& b);

/// "model a11 a12 a21 a22 b1 b2 c1 c2".
std::string serialize(const TransformParams& p);
TransformParams parse_params(const std::string& line);

}  // namespace invreg
