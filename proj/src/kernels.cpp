#include "coad/kernels.hpp"

#include <cmath>
#include <numbers>

namespace coad::kernels {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
}

double gelu(double x) noexcept
{
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad(double x) noexcept
{
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    return cdf + x * pdf;
}

namespace {

void check_nt(const Mat& a, const Mat& b)
{
    if (a.cols != b.cols) {
        throw ShapeError("gemm_nt: inner dims differ " + shape_str(a) + " * " + shape_str(b) + "^T");
    }
}

void check_nn(const Mat& a, const Mat& b)
{
    if (a.cols != b.rows) {
        throw ShapeError("gemm_nn: inner dims differ " + shape_str(a) + " * " + shape_str(b));
    }
}

void check_tn(const Mat& a, const Mat& b, const Mat& c)
{
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols) {
        throw ShapeError("gemm_tn_acc: " + shape_str(a) + "^T * " + shape_str(b) + " into " + shape_str(c));
    }
}

void check_ln(const Mat& x, const Mat& gamma, const Mat& beta)
{
    if (gamma.size() != static_cast<std::size_t>(x.cols) || beta.size() != gamma.size()) {
        throw ShapeError("layernorm: affine params do not match width " + std::to_string(x.cols));
    }
}

// Shared per-row bodies; the serial and omp paths differ only in how rows are
// scheduled so both agree bit for bit on these.
inline void ln_row(std::span<const double> x, const double* g, const double* b, double eps, std::span<double> y,
                   std::span<double> xh, double& rstd_out)
{
    const auto n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) {
        mean += v;
    }
    mean /= n;
    double var = 0.0;
    for (double v : x) {
        var += (v - mean) * (v - mean);
    }
    var /= n;
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < x.size(); ++j) {
        xh[j] = (x[j] - mean) * rstd;
        y[j] = xh[j] * g[j] + b[j];
    }
    rstd_out = rstd;
}

inline void ln_row_backward(std::span<const double> dy, std::span<const double> xh, double rstd, const double* g,
                            std::span<double> dx)
{
    const auto n = static_cast<double>(dy.size());
    double sum_dxh = 0.0;
    double sum_dxh_xh = 0.0;
    for (std::size_t j = 0; j < dy.size(); ++j) {
        const double dxh = dy[j] * g[j];
        sum_dxh += dxh;
        sum_dxh_xh += dxh * xh[j];
    }
    for (std::size_t j = 0; j < dy.size(); ++j) {
        const double dxh = dy[j] * g[j];
        dx[j] = rstd * (dxh - sum_dxh / n - xh[j] * sum_dxh_xh / n);
    }
}

inline void softmax_row(std::span<double> r)
{
    double mx = r[0];
    for (double v : r) {
        mx = std::max(mx, v);
    }
    double s = 0.0;
    for (double& v : r) {
        v = std::exp(v - mx);
        s += v;
    }
    for (double& v : r) {
        v /= s;
    }
}

}  // namespace

// ---------------------------------------------------------------- serial

namespace serial {

void gemm_nt(const Mat& a, const Mat& b, Mat& c)
{
    check_nt(a, b);
    c = Mat(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.rows; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) {
                s += a(i, k) * b(j, k);
            }
            c(i, j) = s;
        }
    }
}

void gemm_nn(const Mat& a, const Mat& b, Mat& c)
{
    check_nn(a, b);
    c = Mat(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) {
                s += a(i, k) * b(k, j);
            }
            c(i, j) = s;
        }
    }
}

void gemm_tn_acc(const Mat& a, const Mat& b, Mat& c)
{
    check_tn(a, b, c);
    for (int i = 0; i < c.rows; ++i) {
        for (int j = 0; j < c.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.rows; ++k) {
                s += a(k, i) * b(k, j);
            }
            c(i, j) += s;
        }
    }
}

void layernorm_forward(const Mat& x, const Mat& gamma, const Mat& beta, double eps, Mat& y, Mat& xhat,
                       std::vector<double>& rstd)
{
    check_ln(x, gamma, beta);
    y = Mat(x.rows, x.cols);
    xhat = Mat(x.rows, x.cols);
    rstd.assign(static_cast<std::size_t>(x.rows), 0.0);
    for (int r = 0; r < x.rows; ++r) {
        ln_row(x.row(r), gamma.data.data(), beta.data.data(), eps, y.row(r), xhat.row(r), rstd[r]);
    }
}

void layernorm_backward(const Mat& dy, const Mat& xhat, const std::vector<double>& rstd, const Mat& gamma,
                        Mat& dx, Mat& dgamma, Mat& dbeta)
{
    require_same_shape(dy, xhat, "layernorm_backward");
    dx = Mat(dy.rows, dy.cols);
    for (int r = 0; r < dy.rows; ++r) {
        ln_row_backward(dy.row(r), xhat.row(r), rstd[r], gamma.data.data(), dx.row(r));
    }
    for (int j = 0; j < dy.cols; ++j) {
        double sg = 0.0;
        double sb = 0.0;
        for (int r = 0; r < dy.rows; ++r) {
            sg += dy(r, j) * xhat(r, j);
            sb += dy(r, j);
        }
        dgamma.data[j] += sg;
        dbeta.data[j] += sb;
    }
}

void gelu_forward(const Mat& x, Mat& y)
{
    y = Mat(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        y.data[i] = gelu(x.data[i]);
    }
}

void gelu_backward(const Mat& x, const Mat& dy, Mat& dx)
{
    require_same_shape(x, dy, "gelu_backward");
    dx = Mat(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        dx.data[i] = dy.data[i] * gelu_grad(x.data[i]);
    }
}

void softmax_rows(Mat& x)
{
    for (int r = 0; r < x.rows; ++r) {
        softmax_row(x.row(r));
    }
}

void pairwise_euclidean(const Mat& x, Mat& d)
{
    d = Mat(x.rows, x.rows);
    for (int i = 0; i < x.rows; ++i) {
        for (int j = 0; j < x.rows; ++j) {
            if (i == j) {
                continue;
            }
            double s = 0.0;
            for (int k = 0; k < x.cols; ++k) {
                const double t = x(i, k) - x(j, k);
                s += t * t;
            }
            d(i, j) = std::sqrt(s);
        }
    }
}

}  // namespace serial

// ---------------------------------------------------------------- omp

namespace omp {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr long kParallelWork = 32 * 1024;

Mat transpose(const Mat& m)
{
    Mat t(m.cols, m.rows);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            t(c, r) = m(r, c);
        }
    }
    return t;
}

// c_row = sum_k a_row[k] * b[k, :]; contiguous inner loop vectorises without
// reassociating any sum.
inline void axpy_rows(const double* a_row, int k, const Mat& b, double* c_row)
{
    const int n = b.cols;
    for (int kk = 0; kk < k; ++kk) {
        const double av = a_row[kk];
        const double* br = b.data.data() + static_cast<std::size_t>(kk) * n;
#pragma omp simd
        for (int j = 0; j < n; ++j) {
            c_row[j] += av * br[j];
        }
    }
}

}  // namespace

void gemm_nn(const Mat& a, const Mat& b, Mat& c)
{
    check_nn(a, b);
    c = Mat(a.rows, b.cols);
    const long work = static_cast<long>(a.rows) * a.cols * b.cols;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
    for (int i = 0; i < a.rows; ++i) {
        axpy_rows(a.data.data() + static_cast<std::size_t>(i) * a.cols, a.cols, b,
                  c.data.data() + static_cast<std::size_t>(i) * c.cols);
    }
}

void gemm_nt(const Mat& a, const Mat& b, Mat& c)
{
    check_nt(a, b);
    gemm_nn(a, transpose(b), c);
}

void gemm_tn_acc(const Mat& a, const Mat& b, Mat& c)
{
    check_tn(a, b, c);
    const Mat at = transpose(a);
    const long work = static_cast<long>(c.rows) * c.cols * a.rows;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
    for (int i = 0; i < c.rows; ++i) {
        axpy_rows(at.data.data() + static_cast<std::size_t>(i) * at.cols, at.cols, b,
                  c.data.data() + static_cast<std::size_t>(i) * c.cols);
    }
}

void layernorm_forward(const Mat& x, const Mat& gamma, const Mat& beta, double eps, Mat& y, Mat& xhat,
                       std::vector<double>& rstd)
{
    check_ln(x, gamma, beta);
    y = Mat(x.rows, x.cols);
    xhat = Mat(x.rows, x.cols);
    rstd.assign(static_cast<std::size_t>(x.rows), 0.0);
#pragma omp parallel for schedule(static) if (x.size() > 4096)
    for (int r = 0; r < x.rows; ++r) {
        ln_row(x.row(r), gamma.data.data(), beta.data.data(), eps, y.row(r), xhat.row(r), rstd[r]);
    }
}

void layernorm_backward(const Mat& dy, const Mat& xhat, const std::vector<double>& rstd, const Mat& gamma,
                        Mat& dx, Mat& dgamma, Mat& dbeta)
{
    require_same_shape(dy, xhat, "layernorm_backward");
    dx = Mat(dy.rows, dy.cols);
#pragma omp parallel for schedule(static) if (dy.size() > 4096)
    for (int r = 0; r < dy.rows; ++r) {
        ln_row_backward(dy.row(r), xhat.row(r), rstd[r], gamma.data.data(), dx.row(r));
    }
    // Column sums walk rows in order, same as the reference.
#pragma omp parallel for schedule(static) if (dy.size() > 4096)
    for (int j = 0; j < dy.cols; ++j) {
        double sg = 0.0;
        double sb = 0.0;
        for (int r = 0; r < dy.rows; ++r) {
            sg += dy(r, j) * xhat(r, j);
            sb += dy(r, j);
        }
        dgamma.data[j] += sg;
        dbeta.data[j] += sb;
    }
}

void gelu_forward(const Mat& x, Mat& y)
{
    y = Mat(x.rows, x.cols);
    const auto n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (n > 8192)
    for (long i = 0; i < n; ++i) {
        y.data[i] = gelu(x.data[i]);
    }
}

void gelu_backward(const Mat& x, const Mat& dy, Mat& dx)
{
    require_same_shape(x, dy, "gelu_backward");
    dx = Mat(x.rows, x.cols);
    const auto n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (n > 8192)
    for (long i = 0; i < n; ++i) {
        dx.data[i] = dy.data[i] * gelu_grad(x.data[i]);
    }
}

void softmax_rows(Mat& x)
{
#pragma omp parallel for schedule(static) if (x.size() > 8192)
    for (int r = 0; r < x.rows; ++r) {
        softmax_row(x.row(r));
    }
}

void pairwise_euclidean(const Mat& x, Mat& d)
{
    d = Mat(x.rows, x.rows);
#pragma omp parallel for schedule(static) if (static_cast<long>(x.rows) * x.rows * x.cols > kParallelWork)
    for (int i = 0; i < x.rows; ++i) {
        for (int j = i + 1; j < x.rows; ++j) {
            double s = 0.0;
            for (int k = 0; k < x.cols; ++k) {
                const double t = x(i, k) - x(j, k);
                s += t * t;
            }
            d(i, j) = std::sqrt(s);
        }
    }
    for (int i = 0; i < x.rows; ++i) {
        for (int j = 0; j < i; ++j) {
            d(i, j) = d(j, i);
        }
    }
}

}  // namespace omp

}  // namespace coad::kernels
