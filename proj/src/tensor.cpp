#include "coad/tensor.hpp"

#include <cmath>

namespace coad {

Mat slice_cols(const Mat& m, int c0, int n)
{
    if (c0 < 0 || n < 0 || c0 + n > m.cols) {
        throw ShapeError("slice_cols: column range out of bounds for " + shape_str(m));
    }
    Mat out(m.rows, n);
    for (int r = 0; r < m.rows; ++r) {
        auto src = m.row(r).subspan(static_cast<std::size_t>(c0), static_cast<std::size_t>(n));
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

void put_cols(Mat& dst, const Mat& src, int c0, bool add)
{
    if (src.rows != dst.rows || c0 < 0 || c0 + src.cols > dst.cols) {
        throw ShapeError("put_cols: " + shape_str(src) + " does not fit into " + shape_str(dst));
    }
    for (int r = 0; r < src.rows; ++r) {
        auto s = src.row(r);
        auto d = dst.row(r).subspan(static_cast<std::size_t>(c0), s.size());
        if (add) {
            for (std::size_t j = 0; j < s.size(); ++j) {
                d[j] += s[j];
            }
        } else {
            std::copy(s.begin(), s.end(), d.begin());
        }
    }
}

double max_abs(const Mat& m) noexcept
{
    double v = 0.0;
    for (double x : m.data) {
        v = std::max(v, std::abs(x));
    }
    return v;
}

double sum_squares(const Mat& m) noexcept
{
    double s = 0.0;
    for (double x : m.data) {
        s += x * x;
    }
    return s;
}

bool all_finite(const Mat& m) noexcept
{
    return std::all_of(m.data.begin(), m.data.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace coad
