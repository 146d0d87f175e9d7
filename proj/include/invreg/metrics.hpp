#pragma once

#include "invreg/image.hpp"

namespace invreg {

/// <x, y> / (|x| |y|). Throws NumericDomainError if either norm is zero.
double ncc(const Image& x, const Image& y);

/// ncc after subtracting each channel's mean. Throws NumericDomainError on
/// zero variance.
double zncc(const Image& x, const Image& y);

/// zncc restricted to the pixels of mask; channel means are taken over the
/// mask as well.
double zncc(const Image& x, const Image& y, const SupportMask& mask);

}  // namespace invreg
