#pragma once

#include "invreg/image.hpp"

namespace invreg {

/// Keys cubic convolution kernel with a = -1/2, support [-2, 2].
double keys_kernel(double x);
/// Derivative of keys_kernel; at breakpoints the right-hand branch is used.
double keys_kernel_deriv(double x);

/// out(i,j,k) = sum_{p,q} image(p,q,k) phi(t0(i,j) - p) phi(t1(i,j) - q).
Image interpolate(const Image& image, const DeformationField& field);

struct WarpWithGradient {
  Image value;  // y o tau
  Image d0;     // derivative of y o tau with respect to tau0
  Image d1;     // derivative with respect to tau1
};

/// Interpolated value together with the Jacobian of the interpolant at tau.
WarpWithGradient interpolate_with_gradient(const Image& image, const DeformationField& field);

struct ImageJacobian {
  Image d0;
  Image d1;
};

/// Jacobian of the interpolant at the grid points.
ImageJacobian jacobian(const Image& image);

}  // namespace invreg
