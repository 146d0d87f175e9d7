#include "invreg/interpolation.hpp"

#include <array>
#include <cmath>

#include "invreg/errors.hpp"
#include "invreg/op_count.hpp"

namespace invreg {

OpCounts& op_counts() {
  thread_local OpCounts counts;
  return counts;
}

double keys_kernel(double x) {
  const double ax = std::abs(x);
  if (ax < 1.0) return (1.5 * ax - 2.5) * ax * ax + 1.0;
  if (ax < 2.0) return ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0;
  return 0.0;
}

double keys_kernel_deriv(double x) {
  const double ax = std::abs(x);
  const double s = x < 0 ? -1.0 : 1.0;
  if (ax < 1.0) return s * (4.5 * ax - 5.0) * ax;
  if (ax < 2.0) return s * ((-1.5 * ax + 5.0) * ax - 4.0);
  return 0.0;
}

namespace {

struct Taps {
  int base;
  std::array<double, 4> w;
  std::array<double, 4> dw;
};

inline Taps taps(double t, bool want_deriv) {
  Taps r;
  const double f = std::floor(t);
  r.base = static_cast<int>(f) - 1;
  for (int a = 0; a < 4; ++a) {
    const double x = t - (f - 1.0 + a);
    r.w[a] = keys_kernel(x);
    r.dw[a] = want_deriv ? keys_kernel_deriv(x) : 0.0;
  }
  return r;
}

void check_field(const DeformationField& field) {
  if (field.t0.size() != std::size_t(field.rows) * field.cols || field.t1.size() != field.t0.size())
    throw ConfigError("deformation field storage does not match its shape");
}

template <bool Grad>
void warp(const Image& y, const DeformationField& field, Image& out, Image* d0, Image* d1) {
  const int m = y.rows(), n = y.cols(), c = y.channels();
  const std::size_t np = field.size();
  for (std::size_t idx = 0; idx < np; ++idx) {
    const double t0 = field.t0[idx], t1 = field.t1[idx];
    // Fully outside: all taps read zero padding.
    if (!(t0 > -2.0 && t0 < m + 1.0 && t1 > -2.0 && t1 < n + 1.0)) continue;
    const Taps a = taps(t0, Grad);
    const Taps b = taps(t1, Grad);
    const bool interior = a.base >= 0 && a.base + 3 < m && b.base >= 0 && b.base + 3 < n;
    for (int k = 0; k < c; ++k) {
      double v = 0.0, g0 = 0.0, g1 = 0.0;
      for (int p = 0; p < 4; ++p) {
        const int row = a.base + p;
        if (!interior && (row < 0 || row >= m)) continue;
        double rv = 0.0, rd = 0.0;
        for (int q = 0; q < 4; ++q) {
          const int col = b.base + q;
          if (!interior && (col < 0 || col >= n)) continue;
          const double s = y(row, col, k);
          rv += s * b.w[q];
          if constexpr (Grad) rd += s * b.dw[q];
        }
        v += a.w[p] * rv;
        if constexpr (Grad) {
          g0 += a.dw[p] * rv;
          g1 += a.w[p] * rd;
        }
      }
      out.plane(k)[idx] = v;
      if constexpr (Grad) {
        d0->plane(k)[idx] = g0;
        d1->plane(k)[idx] = g1;
      }
    }
  }
}

}  // namespace

Image interpolate(const Image& image, const DeformationField& field) {
  check_field(field);
  Image out(field.rows, field.cols, image.channels());
  warp<false>(image, field, out, nullptr, nullptr);
  op_counts().interpolations += 1;
  return out;
}

WarpWithGradient interpolate_with_gradient(const Image& image, const DeformationField& field) {
  check_field(field);
  WarpWithGradient r{Image(field.rows, field.cols, image.channels()),
                     Image(field.rows, field.cols, image.channels()),
                     Image(field.rows, field.cols, image.channels())};
  warp<true>(image, field, r.value, &r.d0, &r.d1);
  op_counts().interpolations += 3;
  return r;
}

ImageJacobian jacobian(const Image& image) {
  auto w = interpolate_with_gradient(image, DeformationField::identity(image.rows(), image.cols()));
  return {std::move(w.d0), std::move(w.d1)};
}

}  // namespace invreg
