#pragma once

// Dense numeric kernels behind the transformer and the detector.
//
// Every kernel exists twice: `serial` is a straightforward reference kept for
// testing and benchmarking, `omp` is the OpenMP-parallel version used by the
// library. The parallel kernels only split independent output rows across
// threads and keep the per-element accumulation order fixed, so results do not
// depend on the thread count.

#include "coad/tensor.hpp"

namespace coad::kernels {

namespace serial {

/// C = A * B^T.  A: m x k, B: n x k.
void gemm_nt(const Mat& a, const Mat& b, Mat& c);
/// C = A * B.  A: m x k, B: k x n.
void gemm_nn(const Mat& a, const Mat& b, Mat& c);
/// C += A^T * B.  A: k x m, B: k x n, C: m x n.
void gemm_tn_acc(const Mat& a, const Mat& b, Mat& c);

void layernorm_forward(const Mat& x, const Mat& gamma, const Mat& beta, double eps, Mat& y, Mat& xhat,
                       std::vector<double>& rstd);
/// Returns dX; accumulates into dgamma / dbeta.
void layernorm_backward(const Mat& dy, const Mat& xhat, const std::vector<double>& rstd, const Mat& gamma,
                        Mat& dx, Mat& dgamma, Mat& dbeta);

void gelu_forward(const Mat& x, Mat& y);
void gelu_backward(const Mat& x, const Mat& dy, Mat& dx);

void softmax_rows(Mat& x);

/// Euclidean distance between every pair of rows.
void pairwise_euclidean(const Mat& x, Mat& d);

}  // namespace serial

namespace omp {

void gemm_nt(const Mat& a, const Mat& b, Mat& c);
void gemm_nn(const Mat& a, const Mat& b, Mat& c);
void gemm_tn_acc(const Mat& a, const Mat& b, Mat& c);
void layernorm_forward(const Mat& x, const Mat& gamma, const Mat& beta, double eps, Mat& y, Mat& xhat,
                       std::vector<double>& rstd);
void layernorm_backward(const Mat& dy, const Mat& xhat, const std::vector<double>& rstd, const Mat& gamma,
                        Mat& dx, Mat& dgamma, Mat& dbeta);
void gelu_forward(const Mat& x, Mat& y);
void gelu_backward(const Mat& x, const Mat& dy, Mat& dx);
void softmax_rows(Mat& x);
void pairwise_euclidean(const Mat& x, Mat& d);

}  // namespace omp

// The library path.
using omp::gelu_backward;
using omp::gelu_forward;
using omp::gemm_nn;
using omp::gemm_nt;
using omp::gemm_tn_acc;
using omp::layernorm_backward;
using omp::layernorm_forward;
using omp::pairwise_euclidean;
using omp::softmax_rows;

/// Exact (erf) GELU and its derivative.
double gelu(double x) noexcept;
double gelu_grad(double x) noexcept;

}  // namespace coad::kernels
