#pragma once

// Single-level orthonormal 2-D Haar transform.
//
// For each disjoint 2x2 block [[a, b], [c, d]] of the input:
//   LL = (a + b + c + d) / 2     HL = (a - b + c - d) / 2
//   LH = (a + b - c - d) / 2     HH = (a - b - c + d) / 2
// The transform is orthogonal, so the inverse is also its adjoint; the model
// relies on that when back-propagating through the reconstruction.

#include "coad/tensor.hpp"

namespace coad {

/// One image plane, H x W.
using ImageChannel = Mat;

struct WaveletComponents {
    Mat ll;
    Mat hl;
    Mat lh;
    Mat hh;
};

/// Throws ShapeError on odd or empty dimensions; no implicit padding.
WaveletComponents dwt2_haar(const ImageChannel& channel);

/// Throws ShapeError unless all four components share one non-empty shape.
ImageChannel idwt2_haar(const WaveletComponents& components);

}  // namespace coad
