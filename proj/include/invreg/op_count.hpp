#pragma once

#include <cstdint>

namespace invreg {

/// Per-thread tally of full-image interpolations and convolutions.
/// interpolate() adds one interpolation; interpolate_with_gradient() adds
/// three (value plus two derivative images); convolve() adds one convolution.
struct OpCounts {
  std::int64_t interpolations = 0;
  std::int64_t convolutions = 0;
  std::int64_t total() const { return interpolations + convolutions; }
};

OpCounts& op_counts();
inline void reset_op_counts() { op_counts() = {}; }

}  // namespace invreg
