#include "invreg/transform.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "invreg/errors.hpp"

namespace invreg {

int param_dim(MotionModel model) {
  switch (model) {
    case MotionModel::translation: return 2;
    case MotionModel::euclidean: return 3;
    case MotionModel::similarity: return 4;
    case MotionModel::affine: return 6;
  }
  return 0;
}

std::string to_string(MotionModel model) {
  switch (model) {
    case MotionModel::translation: return "translation";
    case MotionModel::euclidean: return "euclidean";
    case MotionModel::similarity: return "similarity";
    case MotionModel::affine: return "affine";
  }
  return "?";
}

MotionModel parse_motion_model(const std::string& name) {
  if (name == "translation") return MotionModel::translation;
  if (name == "euclidean" || name == "se2") return MotionModel::euclidean;
  if (name == "similarity") return MotionModel::similarity;
  if (name == "affine") return MotionModel::affine;
  throw ConfigError("unknown motion model: " + name);
}

Eigen::Matrix2d rotation(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix2d R;
  R << c, -s, s, c;
  return R;
}

TransformParams TransformParams::identity(MotionModel model, const Eigen::Vector2d& center) {
  TransformParams p;
  p.model = model;
  p.center = center;
  return p;
}

double TransformParams::theta() const { return std::atan2(A(1, 0), A(0, 0)); }

TransformParams TransformParams::recentered(const Eigen::Vector2d& new_center) const {
  TransformParams p = *this;
  p.b = b + (A - Eigen::Matrix2d::Identity()) * (new_center - center);
  p.center = new_center;
  return p;
}

bool TransformParams::satisfies_model(double tol) const {
  if (!A.allFinite() || !b.allFinite()) return false;
  const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
  switch (model) {
    case MotionModel::translation: return (A - I).norm() <= tol;
    case MotionModel::euclidean: return (A.transpose() * A - I).norm() <= tol && A.determinant() > 0;
    case MotionModel::similarity: {
      const double s2 = 0.5 * (A.transpose() * A).trace();
      return s2 > 0 && (A.transpose() * A - s2 * I).norm() <= tol * std::max(1.0, s2) && A.determinant() > 0;
    }
    case MotionModel::affine: return std::abs(A.determinant()) > tol;
  }
  return false;
}

Eigen::Vector2d grid_center(int rows, int cols) { return {(rows - 1) / 2.0, (cols - 1) / 2.0}; }

DeformationField field_from_params(const TransformParams& p, const FieldGeometry& geo) {
  DeformationField f(geo.rows, geo.cols);
  const Eigen::Vector2d t = p.b + p.center + geo.anchor;
  for (int i = 0; i < geo.rows; ++i)
    for (int j = 0; j < geo.cols; ++j) {
      const double x0 = i + geo.origin(0) - p.center(0);
      const double x1 = j + geo.origin(1) - p.center(1);
      const std::size_t idx = std::size_t(i) * geo.cols + j;
      f.t0[idx] = p.A(0, 0) * x0 + p.A(0, 1) * x1 + t(0);
      f.t1[idx] = p.A(1, 0) * x0 + p.A(1, 1) * x1 + t(1);
    }
  return f;
}

DeformationField field_from_params(const TransformParams& p, int rows, int cols) {
  return field_from_params(p, FieldGeometry::plain(rows, cols));
}

Eigen::Matrix2d project_linear(const Eigen::Matrix2d& A, MotionModel model, bool* reflected) {
  if (reflected) *reflected = false;
  if (model == MotionModel::affine) return A;
  if (model == MotionModel::translation) return Eigen::Matrix2d::Identity();
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix2d U = svd.matrixU(), V = svd.matrixV();
  const double d = (U * V.transpose()).determinant();
  if (d < 0 && reflected) *reflected = true;
  const Eigen::Matrix2d R = U * Eigen::Vector2d(1.0, d < 0 ? -1.0 : 1.0).asDiagonal() * V.transpose();
  if (model == MotionModel::euclidean) return R;
  double s = 0.5 * (R.transpose() * A).trace();
  if (!(s > 1e-12)) {
    s = 1e-12;
    if (reflected) *reflected = true;
  }
  return s * R;
}

TransformParams project_field(const DeformationField& field, MotionModel model, const FieldGeometry& geo,
                              const Eigen::Vector2d& center, bool* reflected) {
  if (field.rows != geo.rows || field.cols != geo.cols) throw ConfigError("project_field: shape mismatch");
  // Centered coordinates make the normal equations diagonal.
  const Eigen::Vector2d g = grid_center(geo.rows, geo.cols) + geo.origin;
  Eigen::Matrix2d cross = Eigen::Matrix2d::Zero();
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  double s00 = 0.0, s11 = 0.0;
  for (int i = 0; i < geo.rows; ++i)
    for (int j = 0; j < geo.cols; ++j) {
      const std::size_t idx = std::size_t(i) * geo.cols + j;
      const Eigen::Vector2d x(i + geo.origin(0) - g(0), j + geo.origin(1) - g(1));
      const Eigen::Vector2d t(field.t0[idx] - geo.anchor(0), field.t1[idx] - geo.anchor(1));
      cross += t * x.transpose();
      mean += t;
      s00 += x(0) * x(0);
      s11 += x(1) * x(1);
    }
  const double npix = double(geo.rows) * geo.cols;
  mean /= npix;
  Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
  if (s00 > 0) A.col(0) = cross.col(0) / s00;
  if (s11 > 0) A.col(1) = cross.col(1) / s11;
  TransformParams p;
  p.model = model;
  p.A = project_linear(A, model, reflected);
  p.center = g;
  p.b = mean - g;
  return p.recentered(center);
}

TransformParams project_field(const DeformationField& field, MotionModel model, bool* reflected) {
  return project_field(field, model, FieldGeometry::plain(field.rows, field.cols),
                       grid_center(field.rows, field.cols), reflected);
}

std::array<DeformationField, 6> centered_basis(int rows, int cols) {
  std::array<DeformationField, 6> out;
  const Eigen::Vector2d g = grid_center(rows, cols);
  for (auto& f : out) f = DeformationField(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const std::size_t idx = std::size_t(i) * cols + j;
      const double x0 = i - g(0), x1 = j - g(1);
      out[0].t0[idx] = x0;
      out[1].t0[idx] = x1;
      out[2].t1[idx] = x0;
      out[3].t1[idx] = x1;
      out[4].t0[idx] = 1.0;
      out[5].t1[idx] = 1.0;
    }
  return out;
}

std::pair<Eigen::Matrix2d, Eigen::Vector2d> field_grad_to_params(const DeformationField& grad,
                                                                 const FieldGeometry& geo,
                                                                 const Eigen::Vector2d& center) {
  Eigen::Matrix2d gA = Eigen::Matrix2d::Zero();
  Eigen::Vector2d gb = Eigen::Vector2d::Zero();
  for (int i = 0; i < geo.rows; ++i)
    for (int j = 0; j < geo.cols; ++j) {
      const std::size_t idx = std::size_t(i) * geo.cols + j;
      const double x0 = i + geo.origin(0) - center(0), x1 = j + geo.origin(1) - center(1);
      const double g0 = grad.t0[idx], g1 = grad.t1[idx];
      gA(0, 0) += g0 * x0;
      gA(0, 1) += g0 * x1;
      gA(1, 0) += g1 * x0;
      gA(1, 1) += g1 * x1;
      gb(0) += g0;
      gb(1) += g1;
    }
  return {gA, gb};
}

double so2_grad(const Eigen::Matrix2d& gradA, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix2d dR;
  dR << -s, -c, c, -s;
  return (gradA.array() * dR.array()).sum();
}

std::pair<Eigen::Matrix2d, Eigen::Vector2d> inverse_param_grads(const Eigen::Matrix2d& gradA_std,
                                                                const Eigen::Vector2d& gradb_std,
                                                                const Eigen::Matrix2d& A,
                                                                const Eigen::Vector2d& b) {
  const double det = A.determinant();
  if (!(std::abs(det) > 1e-14)) {
    std::ostringstream os;
    os << "singular linear part (det " << det << ") in inverse parameterization";
    throw NumericDomainError(os.str());
  }
  const Eigen::Matrix2d Ai = A.inverse();
  const Eigen::Matrix2d AiT = Ai.transpose();
  const Eigen::Vector2d Aib = Ai * b;
  Eigen::Matrix2d gA = -AiT * gradA_std * AiT + AiT * gradb_std * Aib.transpose();
  Eigen::Vector2d gb = -AiT * gradb_std;
  return {gA, gb};
}

std::string serialize(const TransformParams& p) {
  std::ostringstream os;
  os << std::setprecision(17) << to_string(p.model) << ' ' << p.A(0, 0) << ' ' << p.A(0, 1) << ' '
     << p.A(1, 0) << ' ' << p.A(1, 1) << ' ' << p.b(0) << ' ' << p.b(1) << ' ' << p.center(0) << ' '
     << p.center(1);
  return os.str();
}

TransformParams parse_params(const std::string& line) {
  std::istringstream is(line);
  std::string model;
  TransformParams p;
  if (!(is >> model >> p.A(0, 0) >> p.A(0, 1) >> p.A(1, 0) >> p.A(1, 1) >> p.b(0) >> p.b(1) >> p.center(0) >>
        p.center(1)))
    throw ConfigError("malformed transform params: " + line);
  p.model = parse_motion_model(model);
  return p;
}

}  // namespace invreg
