#include "invreg/gaussian.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/Eigenvalues>
#include <fftw3.h>

#include "invreg/errors.hpp"
#include "invreg/op_count.hpp"

namespace invreg {

int gaussian_side(double sigma) {
  int s = static_cast<int>(std::ceil(6.0 * sigma - 1e-12));
  if (s < 1) s = 1;
  if (s % 2 == 0) ++s;
  return s;
}

GaussianFilter::GaussianFilter(const Eigen::Matrix2d& covariance, int side) : cov_(covariance) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (covariance + covariance.transpose()));
  const double lmin = es.eigenvalues()(0), lmax = es.eigenvalues()(1);
  if (!(lmin > 0.0) || !std::isfinite(lmax)) {
    std::ostringstream os;
    os << "gaussian covariance is not positive definite (eigenvalue " << lmin << ")";
    throw NumericDomainError(os.str());
  }
  side_ = side > 0 ? side : gaussian_side(std::sqrt(lmax));
  if (side_ % 2 == 0) throw ConfigError("gaussian filter side must be odd");
  isotropic_ = covariance(0, 1) == 0.0 && covariance(1, 0) == 0.0 && covariance(0, 0) == covariance(1, 1);
  const int h = side_ / 2;
  samples_.assign(std::size_t(side_) * side_, 0.0);
  factor_.assign(side_, 0.0);
  if (side_ == 1) {
    samples_[0] = 1.0;
    factor_[0] = 1.0;
    return;
  }
  if (isotropic_) {
    const double s = covariance(0, 0);
    for (int a = 0; a < side_; ++a) {
      const double w = a - h;
      factor_[a] = std::exp(-w * w / (2.0 * s)) / std::sqrt(2.0 * std::numbers::pi * s);
    }
    for (int a = 0; a < side_; ++a)
      for (int b = 0; b < side_; ++b) samples_[std::size_t(a) * side_ + b] = factor_[a] * factor_[b];
    return;
  }
  const Eigen::Matrix2d inv = cov_.inverse();
  const double norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(cov_.determinant()));
  for (int a = 0; a < side_; ++a)
    for (int b = 0; b < side_; ++b) {
      Eigen::Vector2d w(a - h, b - h);
      samples_[std::size_t(a) * side_ + b] = norm * std::exp(-0.5 * w.dot(inv * w));
    }
}

GaussianFilter GaussianFilter::isotropic(double variance, int side) {
  return GaussianFilter(variance * Eigen::Matrix2d::Identity(), side);
}

double GaussianFilter::mass() const {
  double s = 0.0;
  for (double v : samples_) s += v;
  return s;
}

namespace {

struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

struct FftwBuffer {
  void operator()(void* p) const { fftw_free(p); }
};

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

// Plans are created once per padded size and only executed afterwards via the
// new-array interface, which FFTW documents as thread safe.
FftPlans plans_for(int rows, int cols) {
  static std::map<std::pair<int, int>, FftPlans> cache;
  std::lock_guard lock(plan_mutex());
  auto it = cache.find({rows, cols});
  if (it != cache.end()) return it->second;
  const int ccols = cols / 2 + 1;
  double* in = fftw_alloc_real(std::size_t(rows) * cols);
  fftw_complex* out = fftw_alloc_complex(std::size_t(rows) * ccols);
  FftPlans p;
  p.forward = fftw_plan_dft_r2c_2d(rows, cols, in, out, FFTW_ESTIMATE);
  p.backward = fftw_plan_dft_c2r_2d(rows, cols, out, in, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  cache.emplace(std::make_pair(rows, cols), p);
  return p;
}

int good_size(int n) {
  // Smallest 2^a 3^b 5^c >= n.
  for (int s = n;; ++s) {
    int r = s;
    for (int f : {2, 3, 5})
      while (r % f == 0) r /= f;
    if (r == 1) return s;
  }
}

void convolve_separable(std::span<const double> src, std::span<double> dst, int m, int n,
                        const std::vector<double>& f) {
  const int h = static_cast<int>(f.size()) / 2;
  std::vector<double> tmp(std::size_t(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* row = src.data() + std::size_t(i) * n;
    double* trow = tmp.data() + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      const int lo = std::max(-h, j - n + 1), hi = std::min(h, j);
      for (int w = lo; w <= hi; ++w) s += f[w + h] * row[j - w];
      trow[j] = s;
    }
  }
  for (int i = 0; i < m; ++i) {
    double* drow = dst.data() + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) drow[j] = 0.0;
    const int lo = std::max(-h, i - m + 1), hi = std::min(h, i);
    for (int w = lo; w <= hi; ++w) {
      const double fw = f[w + h];
      const double* trow = tmp.data() + std::size_t(i - w) * n;
      for (int j = 0; j < n; ++j) drow[j] += fw * trow[j];
    }
  }
}

void convolve_direct(std::span<const double> src, std::span<double> dst, int m, int n,
                     const GaussianFilter& g) {
  const int h = g.half();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int a = -h; a <= h; ++a) {
        const int si = i - a;
        if (si < 0 || si >= m) continue;
        for (int b = -h; b <= h; ++b) {
          const int sj = j - b;
          if (sj < 0 || sj >= n) continue;
          s += g(a + h, b + h) * src[std::size_t(si) * n + sj];
        }
      }
      dst[std::size_t(i) * n + j] = s;
    }
}

void convolve_fft(std::span<const double> src, std::span<double> dst, int m, int n,
                  const GaussianFilter& g) {
  const int s = g.side(), h = g.half();
  auto full = fft_convolve_full(src, m, n, g.samples(), s, s);
  const int fn = n + s - 1;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) dst[std::size_t(i) * n + j] = full[std::size_t(i + h) * fn + j + h];
}

}  // namespace

std::vector<double> fft_convolve_full(std::span<const double> a, int ma, int na,
                                      std::span<const double> b, int mb, int nb) {
  const int om = ma + mb - 1, on = na + nb - 1;
  const int pm = good_size(om), pn = good_size(on);
  const int cn = pn / 2 + 1;
  const FftPlans plans = plans_for(pm, pn);
  std::unique_ptr<double, FftwBuffer> ra(fftw_alloc_real(std::size_t(pm) * pn));
  std::unique_ptr<double, FftwBuffer> rb(fftw_alloc_real(std::size_t(pm) * pn));
  std::unique_ptr<fftw_complex, FftwBuffer> ca(fftw_alloc_complex(std::size_t(pm) * cn));
  std::unique_ptr<fftw_complex, FftwBuffer> cb(fftw_alloc_complex(std::size_t(pm) * cn));
  auto load = [&](double* dst, std::span<const double> src, int r, int c) {
    std::fill(dst, dst + std::size_t(pm) * pn, 0.0);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) dst[std::size_t(i) * pn + j] = src[std::size_t(i) * c + j];
  };
  load(ra.get(), a, ma, na);
  load(rb.get(), b, mb, nb);
  fftw_execute_dft_r2c(plans.forward, ra.get(), ca.get());
  fftw_execute_dft_r2c(plans.forward, rb.get(), cb.get());
  const double scale = 1.0 / (double(pm) * pn);
  fftw_complex* x = ca.get();
  fftw_complex* y = cb.get();
  for (std::size_t k = 0; k < std::size_t(pm) * cn; ++k) {
    const double re = x[k][0] * y[k][0] - x[k][1] * y[k][1];
    const double im = x[k][0] * y[k][1] + x[k][1] * y[k][0];
    x[k][0] = re * scale;
    x[k][1] = im * scale;
  }
  fftw_execute_dft_c2r(plans.backward, ca.get(), ra.get());
  std::vector<double> out(std::size_t(om) * on);
  for (int i = 0; i < om; ++i)
    for (int j = 0; j < on; ++j) out[std::size_t(i) * on + j] = ra.get()[std::size_t(i) * pn + j];
  return out;
}

std::vector<double> correlate_offsets(std::span<const double> a, std::span<const double> b,
                                      int rows, int cols, int h) {
  const int s = 2 * h + 1;
  std::vector<double> out(std::size_t(s) * s, 0.0);
  if (std::size_t(s) * s <= 49) {
    for (int w0 = -h; w0 <= h; ++w0)
      for (int w1 = -h; w1 <= h; ++w1) {
        double acc = 0.0;
        for (int i = std::max(0, w0); i < std::min(rows, rows + w0); ++i)
          for (int j = std::max(0, w1); j < std::min(cols, cols + w1); ++j)
            acc += a[std::size_t(i) * cols + j] * b[std::size_t(i - w0) * cols + j - w1];
        out[std::size_t(w0 + h) * s + w1 + h] = acc;
      }
    return out;
  }
  // Full convolution of a with the flipped b, read at w + (rows-1, cols-1).
  std::vector<double> flipped(std::size_t(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      flipped[std::size_t(rows - 1 - i) * cols + (cols - 1 - j)] = b[std::size_t(i) * cols + j];
  auto full = fft_convolve_full(a, rows, cols, flipped, rows, cols);
  const int fn = 2 * cols - 1;
  for (int w0 = -h; w0 <= h; ++w0)
    for (int w1 = -h; w1 <= h; ++w1) {
      const int r = w0 + rows - 1, c = w1 + cols - 1;
      if (r < 0 || c < 0 || r >= 2 * rows - 1 || c >= fn) continue;
      out[std::size_t(w0 + h) * s + w1 + h] = full[std::size_t(r) * fn + c];
    }
  return out;
}

Image convolve(const Image& image, const GaussianFilter& filter) {
  op_counts().convolutions += 1;
  if (filter.is_impulse()) return image;
  const int m = image.rows(), n = image.cols();
  Image out(m, n, image.channels());
  for (int k = 0; k < image.channels(); ++k) {
    if (filter.is_isotropic())
      convolve_separable(image.plane(k), out.plane(k), m, n, filter.factor());
    else if (filter.side() <= 9)
      convolve_direct(image.plane(k), out.plane(k), m, n, filter);
    else
      convolve_fft(image.plane(k), out.plane(k), m, n, filter);
  }
  return out;
}

}  // namespace invreg
