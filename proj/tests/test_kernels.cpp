#include <doctest.h>

#include <cmath>
#include <random>

#include "coad/kernels.hpp"
#include "oracles.hpp"

using namespace coad;

namespace {

void check_close(const Mat& a, const Mat& b, double tol = 1e-12)
{
    REQUIRE(a.same_shape(b));
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(std::abs(a.data[i] - b.data[i]) <= tol * (1.0 + std::abs(b.data[i])));
    }
}

}  // namespace

TEST_CASE("omp gemm kernels agree with the serial reference")
{
    std::mt19937_64 rng(11);
    for (auto [m, k, n] : {std::tuple{1, 1, 1}, {7, 5, 3}, {64, 33, 130}, {256, 64, 192}}) {
        const Mat a = oracle::random_mat(m, k, rng);
        const Mat bt = oracle::random_mat(n, k, rng);
        const Mat b = oracle::random_mat(k, n, rng);
        Mat c1, c2;
        kernels::serial::gemm_nt(a, bt, c1);
        kernels::omp::gemm_nt(a, bt, c2);
        check_close(c2, c1);
        kernels::serial::gemm_nn(a, b, c1);
        kernels::omp::gemm_nn(a, b, c2);
        check_close(c2, c1);

        const Mat x = oracle::random_mat(m, n, rng);
        Mat acc1 = oracle::random_mat(k, n, rng);
        Mat acc2 = acc1;
        kernels::serial::gemm_tn_acc(a, x, acc1);
        kernels::omp::gemm_tn_acc(a, x, acc2);
        check_close(acc2, acc1);
    }
}

TEST_CASE("gemm rejects mismatched inner dimensions")
{
    Mat a(2, 3), b(4, 2), c;
    CHECK_THROWS_AS(kernels::omp::gemm_nn(a, b, c), ShapeError);
    CHECK_THROWS_AS(kernels::serial::gemm_nt(a, b, c), ShapeError);
}

TEST_CASE("layernorm, gelu, softmax and distances match the reference bit for bit")
{
    std::mt19937_64 rng(5);
    const Mat x = oracle::random_mat(300, 64, rng, -3, 3);
    const Mat g = oracle::random_mat(1, 64, rng);
    const Mat be = oracle::random_mat(1, 64, rng);
    Mat y1, y2, xh1, xh2;
    std::vector<double> r1, r2;
    kernels::serial::layernorm_forward(x, g, be, 1e-5, y1, xh1, r1);
    kernels::omp::layernorm_forward(x, g, be, 1e-5, y2, xh2, r2);
    CHECK(y1 == y2);
    CHECK(r1 == r2);

    const Mat dy = oracle::random_mat(300, 64, rng);
    Mat dx1, dx2, dg1(1, 64), dg2(1, 64), db1(1, 64), db2(1, 64);
    kernels::serial::layernorm_backward(dy, xh1, r1, g, dx1, dg1, db1);
    kernels::omp::layernorm_backward(dy, xh2, r2, g, dx2, dg2, db2);
    CHECK(dx1 == dx2);
    CHECK(dg1 == dg2);
    CHECK(db1 == db2);

    kernels::serial::gelu_forward(x, y1);
    kernels::omp::gelu_forward(x, y2);
    CHECK(y1 == y2);
    kernels::serial::gelu_backward(x, dy, dx1);
    kernels::omp::gelu_backward(x, dy, dx2);
    CHECK(dx1 == dx2);

    Mat s1 = x, s2 = x;
    kernels::serial::softmax_rows(s1);
    kernels::omp::softmax_rows(s2);
    CHECK(s1 == s2);
    for (int r = 0; r < s1.rows; ++r) {
        double sum = 0.0;
        for (double v : s1.row(r)) {
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }

    Mat d1, d2;
    kernels::serial::pairwise_euclidean(x, d1);
    kernels::omp::pairwise_euclidean(x, d2);
    check_close(d2, d1, 1e-14);
}

TEST_CASE("gelu derivative matches central differences")
{
    for (double x : {-4.0, -1.3, -0.2, 0.0, 0.4, 1.0, 2.5}) {
        double xv = x;
        const double fd = oracle::central_difference([&] { return kernels::gelu(xv); }, xv, 1e-6);
        CHECK(kernels::gelu_grad(x) == doctest::Approx(fd).epsilon(1e-8));
    }
    CHECK(kernels::gelu(0.0) == 0.0);
}
