// Serial reference vs OpenMP kernels at the shapes the model hits:
// 224 px input gives 196 tokens of width 64 per encoder and a 2048-wide FF layer.

#include <random>

#include <benchmark/benchmark.h>

#include "coad/kernels.hpp"

using namespace coad;

namespace {

Mat random_mat(int r, int c, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat m(r, c);
    for (double& v : m.data) {
        v = u(rng);
    }
    return m;
}

// Args: tokens, in width, out width.
template <void (*Kernel)(const Mat&, const Mat&, Mat&)>
void BM_gemm_nt(benchmark::State& state)
{
    const Mat a = random_mat(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 1);
    const Mat w = random_mat(static_cast<int>(state.range(2)), static_cast<int>(state.range(1)), 2);
    Mat c;
    for (auto _ : state) {
        Kernel(a, w, c);
        benchmark::DoNotOptimize(c.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1) * state.range(2));
}

template <void (*Kernel)(const Mat&, const Mat&, Mat&)>
void BM_gemm_tn_acc(benchmark::State& state)
{
    const Mat a = random_mat(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 3);
    const Mat b = random_mat(static_cast<int>(state.range(0)), static_cast<int>(state.range(2)), 4);
    Mat c(static_cast<int>(state.range(1)), static_cast<int>(state.range(2)));
    for (auto _ : state) {
        Kernel(a, b, c);
        benchmark::DoNotOptimize(c.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1) * state.range(2));
}

template <void (*Kernel)(const Mat&, const Mat&, const Mat&, double, Mat&, Mat&, std::vector<double>&)>
void BM_layernorm(benchmark::State& state)
{
    const int n = static_cast<int>(state.range(0));
    const Mat x = random_mat(n, 64, 5);
    const Mat gamma = random_mat(1, 64, 6);
    const Mat beta = random_mat(1, 64, 7);
    Mat y, xhat;
    std::vector<double> rstd;
    for (auto _ : state) {
        Kernel(x, gamma, beta, 1e-5, y, xhat, rstd);
        benchmark::DoNotOptimize(y.data.data());
    }
}

template <void (*Kernel)(const Mat&, Mat&)>
void BM_gelu(benchmark::State& state)
{
    const Mat x = random_mat(static_cast<int>(state.range(0)), 2048, 8);
    Mat y;
    for (auto _ : state) {
        Kernel(x, y);
        benchmark::DoNotOptimize(y.data.data());
    }
}

template <void (*Kernel)(Mat&)>
void BM_softmax(benchmark::State& state)
{
    const int n = static_cast<int>(state.range(0));
    const Mat x0 = random_mat(n, n, 9);
    for (auto _ : state) {
        Mat x = x0;
        Kernel(x);
        benchmark::DoNotOptimize(x.data.data());
    }
}

template <void (*Kernel)(const Mat&, Mat&)>
void BM_pairwise(benchmark::State& state)
{
    const Mat x = random_mat(static_cast<int>(state.range(0)), 448, 10);
    Mat d;
    for (auto _ : state) {
        Kernel(x, d);
        benchmark::DoNotOptimize(d.data.data());
    }
}

}  // namespace

BENCHMARK(BM_gemm_nt<kernels::serial::gemm_nt>)->Name("gemm_nt/serial")->Args({196, 64, 2048})->Args({3136, 64, 64});
BENCHMARK(BM_gemm_nt<kernels::omp::gemm_nt>)->Name("gemm_nt/omp")->Args({196, 64, 2048})->Args({3136, 64, 64});
BENCHMARK(BM_gemm_nt<kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Args({196, 64, 64});
BENCHMARK(BM_gemm_nt<kernels::omp::gemm_nn>)->Name("gemm_nn/omp")->Args({196, 64, 64});
BENCHMARK(BM_gemm_tn_acc<kernels::serial::gemm_tn_acc>)->Name("gemm_tn_acc/serial")->Args({196, 2048, 64});
BENCHMARK(BM_gemm_tn_acc<kernels::omp::gemm_tn_acc>)->Name("gemm_tn_acc/omp")->Args({196, 2048, 64});
BENCHMARK(BM_layernorm<kernels::serial::layernorm_forward>)->Name("layernorm/serial")->Arg(3136);
BENCHMARK(BM_layernorm<kernels::omp::layernorm_forward>)->Name("layernorm/omp")->Arg(3136);
BENCHMARK(BM_gelu<kernels::serial::gelu_forward>)->Name("gelu/serial")->Arg(196);
BENCHMARK(BM_gelu<kernels::omp::gelu_forward>)->Name("gelu/omp")->Arg(196);
BENCHMARK(BM_softmax<kernels::serial::softmax_rows>)->Name("softmax/serial")->Arg(196);
BENCHMARK(BM_softmax<kernels::omp::softmax_rows>)->Name("softmax/omp")->Arg(196);
BENCHMARK(BM_pairwise<kernels::serial::pairwise_euclidean>)->Name("pairwise/serial")->Arg(10)->Arg(400);
BENCHMARK(BM_pairwise<kernels::omp::pairwise_euclidean>)->Name("pairwise/omp")->Arg(10)->Arg(400);

BENCHMARK_MAIN();
