#include "coad/wavelet.hpp"

namespace coad {

WaveletComponents dwt2_haar(const ImageChannel& x)
{
    if (x.rows <= 0 || x.cols <= 0 || x.rows % 2 != 0 || x.cols % 2 != 0) {
        throw ShapeError("dwt2_haar: channel must have even positive dimensions, got " + shape_str(x));
    }
    const int h = x.rows / 2;
    const int w = x.cols / 2;
    WaveletComponents out{Mat(h, w), Mat(h, w), Mat(h, w), Mat(h, w)};
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const double a = x(2 * i, 2 * j);
            const double b = x(2 * i, 2 * j + 1);
            const double c = x(2 * i + 1, 2 * j);
            const double d = x(2 * i + 1, 2 * j + 1);
            out.ll(i, j) = 0.5 * (a + b + c + d);
            out.hl(i, j) = 0.5 * (a - b + c - d);
            out.lh(i, j) = 0.5 * (a + b - c - d);
            out.hh(i, j) = 0.5 * (a - b - c + d);
        }
    }
    return out;
}

ImageChannel idwt2_haar(const WaveletComponents& s)
{
    if (!s.ll.same_shape(s.hl) || !s.ll.same_shape(s.lh) || !s.ll.same_shape(s.hh)) {
        throw ShapeError("idwt2_haar: component shapes differ (" + shape_str(s.ll) + ", " + shape_str(s.hl) + ", " +
                         shape_str(s.lh) + ", " + shape_str(s.hh) + ")");
    }
    if (s.ll.empty()) {
        throw ShapeError("idwt2_haar: empty components");
    }
    Mat x(2 * s.ll.rows, 2 * s.ll.cols);
    for (int i = 0; i < s.ll.rows; ++i) {
        for (int j = 0; j < s.ll.cols; ++j) {
            const double ll = s.ll(i, j);
            const double hl = s.hl(i, j);
            const double lh = s.lh(i, j);
            const double hh = s.hh(i, j);
            x(2 * i, 2 * j) = 0.5 * (ll + hl + lh + hh);
            x(2 * i, 2 * j + 1) = 0.5 * (ll - hl + lh - hh);
            x(2 * i + 1, 2 * j) = 0.5 * (ll + hl - lh - hh);
            x(2 * i + 1, 2 * j + 1) = 0.5 * (ll - hl - lh + hh);
        }
    }
    return x;
}

}  // namespace coad
