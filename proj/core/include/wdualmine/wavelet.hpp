#pragma once

#include "wdualmine/tensor.hpp"

namespace wdualmine {

// Orthonormal 2-D Haar sub-bands of the last two axes, each half the
// parent resolution. LL carries energy, the others carry oriented detail.
struct WaveletBands {
  Tensor ll, lh, hl, hh;
};

// Forward transform; spatial extents must be even. Per 2x2 block
// (a b / c d): LL=(a+b+c+d)/2, LH=(a-b+c-d)/2, HL=(a+b-c-d)/2,
// HH=(a-b-c+d)/2. The 1/2 scaling makes the transform orthonormal, so
// the inverse is its transpose and L2 energy is preserved.
WaveletBands haar_dwt(const Tensor& x);

// Exact inverse of haar_dwt; all four bands must share one shape.
Tensor haar_idwt(const WaveletBands& bands);

}  // namespace wdualmine
