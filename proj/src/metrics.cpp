#include "invreg/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "invreg/errors.hpp"

namespace invreg {

namespace {

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

void require_same(const Image& x, const Image& y) {
  if (!x.same_shape(y)) throw ConfigError("correlation inputs differ in shape");
}

}  // namespace

double ncc(const Image& x, const Image& y) {
  require_same(x, y);
  const double xx = squared_norm(x), yy = squared_norm(y);
  if (!(xx > 0.0) || !(yy > 0.0)) throw NumericDomainError("ncc: input has zero norm");
  return clamp_unit(dot(x, y) / std::sqrt(xx * yy));
}

double zncc(const Image& x, const Image& y) {
  return zncc(x, y, SupportMask(x.rows(), x.cols(), true));
}

double zncc(const Image& x, const Image& y, const SupportMask& mask) {
  require_same(x, y);
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) throw ConfigError("zncc: mask shape");
  const std::size_t cnt = mask.count();
  if (cnt == 0) throw NumericDomainError("zncc: empty mask");
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (int k = 0; k < x.channels(); ++k) {
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j)
        if (mask.contains(i, j)) {
          mx += x(i, j, k);
          my += y(i, j, k);
        }
    mx /= double(cnt);
    my /= double(cnt);
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j)
        if (mask.contains(i, j)) {
          const double a = x(i, j, k) - mx, b = y(i, j, k) - my;
          xy += a * b;
          xx += a * a;
          yy += b * b;
        }
  }
  if (!(xx > 1e-300) || !(yy > 1e-300)) throw NumericDomainError("zncc: input has zero variance");
  return clamp_unit(xy / std::sqrt(xx * yy));
}

}  // namespace invreg
