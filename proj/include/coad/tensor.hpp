#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coad {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor/grid dimensions do not satisfy an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid or inconsistent configuration (variant, selection, keys...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File could not be read, parsed or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Dense row-major matrix of doubles. Used for token grids (rows = tokens),
/// weights (rows = output features) and image planes.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill)
    {
        if (r < 0 || c < 0) {
            throw ShapeError("negative matrix dimension");
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
    [[nodiscard]] bool empty() const noexcept { return data.empty(); }

    double& operator()(int r, int c) noexcept
    {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return data[static_cast<std::size_t>(r) * cols + c];
    }
    double operator()(int r, int c) const noexcept
    {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return data[static_cast<std::size_t>(r) * cols + c];
    }

    std::span<double> row(int r) noexcept
    {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }
    std::span<const double> row(int r) const noexcept
    {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }

    void fill(double v) noexcept { std::fill(data.begin(), data.end(), v); }

    [[nodiscard]] bool same_shape(const Mat& o) const noexcept { return rows == o.rows && cols == o.cols; }

    friend bool operator==(const Mat&, const Mat&) = default;
};

inline std::string shape_str(const Mat& m)
{
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

inline void require_same_shape(const Mat& a, const Mat& b, const char* what)
{
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
}

/// Copies columns [c0, c0 + n) of every row.
Mat slice_cols(const Mat& m, int c0, int n);
/// Writes `src` into columns [c0, c0 + src.cols) of `dst` (accumulating when `add`).
void put_cols(Mat& dst, const Mat& src, int c0, bool add = false);

double max_abs(const Mat& m) noexcept;
double sum_squares(const Mat& m) noexcept;
bool all_finite(const Mat& m) noexcept;

}  // namespace coad
