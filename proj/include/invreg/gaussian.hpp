#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "invreg/image.hpp"

namespace invreg {

/// Odd support side for standard deviation sigma: ceil(6 sigma), bumped to odd.
int gaussian_side(double sigma);

/// Sampled zero-mean Gaussian density on a square odd grid.
///
/// Samples are the density values 1/(2 pi sqrt(det M)) exp(-w^T M^-1 w / 2)
/// at integer offsets w from the center index floor(side/2); they are not
/// renormalized. When the side rule yields a single pixel the filter is the
/// unit impulse.
class GaussianFilter {
 public:
  GaussianFilter() = default;
  /// side <= 0 selects the 6-sigma rule from the largest eigenvalue.
  explicit GaussianFilter(const Eigen::Matrix2d& covariance, int side = 0);
  static GaussianFilter isotropic(double variance, int side = 0);

  int side() const { return side_; }
  int half() const { return side_ / 2; }
  const Eigen::Matrix2d& covariance() const { return cov_; }
  bool is_isotropic() const { return isotropic_; }
  bool is_impulse() const { return side_ == 1; }

  /// Sample at grid index (a, b), both in [0, side).
  double operator()(int a, int b) const { return samples_[std::size_t(a) * side_ + b]; }
  double center() const { return (*this)(half(), half()); }
  double mass() const;
  const std::vector<double>& samples() const { return samples_; }
  /// One-dimensional factor; only meaningful for isotropic filters.
  const std::vector<double>& factor() const { return factor_; }

 private:
  Eigen::Matrix2d cov_ = Eigen::Matrix2d::Identity();
  int side_ = 1;
  bool isotropic_ = true;
  std::vector<double> samples_{1.0};
  std::vector<double> factor_{1.0};
};

/// Channelwise linear convolution, zero padded, cropped to the input shape.
/// The filters are centrally symmetric, so this operator is self-adjoint.
Image convolve(const Image& image, const GaussianFilter& filter);

/// Full linear convolution of two real 2D arrays via FFT.
/// Output has shape (ma + mb - 1) x (na + nb - 1), row-major.
std::vector<double> fft_convolve_full(std::span<const double> a, int ma, int na,
                                      std::span<const double> b, int mb, int nb);

/// V(w) = sum_p a(p) b(p - w) for integer offsets w in [-h, h]^2 on a shared
/// rows x cols grid; output row-major over (w0 + h, w1 + h).
std::vector<double> correlate_offsets(std::span<const double> a, std::span<const double> b,
                                      int rows, int cols, int h);

}  // namespace invreg
