// OpenMP kernels against their serial reference versions.

#include <benchmark/benchmark.h>

#include <random>
#include <span>
#include <vector>

#include "cmcrd/kernels.hpp"

using namespace cmcrd;
using kernels::Trans;

namespace {

using GemmFn = void (*)(Trans, Trans, double, const Matrix&, const Matrix&, double, Matrix&);
using SoftmaxFn = Matrix (*)(const Matrix&, double);
using ColumnSumsFn = void (*)(const Matrix&, std::span<double>);
using ReluFn = void (*)(Matrix&);
using ReluBackwardFn = void (*)(const Matrix&, Matrix&);

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// Batch x width times width x width, the shape of a hidden-layer forward pass.
void bm_gemm(benchmark::State& state, GemmFn gemm, Trans ta, Trans tb) {
  const auto n = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1));
  const Matrix a = ta == Trans::No ? random_matrix(n, k, 1) : random_matrix(k, n, 1);
  const Matrix b = random_matrix(k, k, 2);
  Matrix c(n, k);
  for (auto _ : state) {
    gemm(ta, tb, 1.0, a, b, 0.0, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * k * k));
}

void bm_softmax(benchmark::State& state, SoftmaxFn softmax) {
  const Matrix logits = random_matrix(static_cast<std::size_t>(state.range(0)), 5, 3);
  for (auto _ : state) benchmark::DoNotOptimize(softmax(logits, 1.0));
}

void bm_column_sums(benchmark::State& state, ColumnSumsFn column_sums) {
  const Matrix m = random_matrix(static_cast<std::size_t>(state.range(0)), 256, 4);
  std::vector<double> out(256);
  for (auto _ : state) {
    column_sums(m, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void bm_relu(benchmark::State& state, ReluFn relu, ReluBackwardFn relu_backward) {
  const Matrix x = random_matrix(static_cast<std::size_t>(state.range(0)), 256, 5);
  const Matrix g = random_matrix(x.rows(), x.cols(), 6);
  for (auto _ : state) {
    Matrix act = x, grad = g;
    relu(act);
    relu_backward(act, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}

void shapes(benchmark::internal::Benchmark* b) {
  for (long n : {128, 1024})
    for (long k : {64, 256}) b->Args({n, k});
}

}  // namespace

BENCHMARK_CAPTURE(bm_gemm, omp_nn, kernels::gemm, Trans::No, Trans::No)->Apply(shapes);
BENCHMARK_CAPTURE(bm_gemm, reference_nn, kernels::reference::gemm, Trans::No, Trans::No)->Apply(shapes);
BENCHMARK_CAPTURE(bm_gemm, omp_tn, kernels::gemm, Trans::Yes, Trans::No)->Apply(shapes);
BENCHMARK_CAPTURE(bm_gemm, reference_tn, kernels::reference::gemm, Trans::Yes, Trans::No)->Apply(shapes);
BENCHMARK_CAPTURE(bm_gemm, omp_nt, kernels::gemm, Trans::No, Trans::Yes)->Apply(shapes);
BENCHMARK_CAPTURE(bm_gemm, reference_nt, kernels::reference::gemm, Trans::No, Trans::Yes)->Apply(shapes);

BENCHMARK_CAPTURE(bm_softmax, omp, kernels::softmax_rows)->Arg(4096);
BENCHMARK_CAPTURE(bm_softmax, reference, kernels::reference::softmax_rows)->Arg(4096);
BENCHMARK_CAPTURE(bm_column_sums, omp, kernels::column_sums)->Arg(4096);
BENCHMARK_CAPTURE(bm_column_sums, reference, kernels::reference::column_sums)->Arg(4096);
BENCHMARK_CAPTURE(bm_relu, omp, kernels::relu_inplace, kernels::relu_backward)->Arg(4096);
BENCHMARK_CAPTURE(bm_relu, reference, kernels::reference::relu_inplace, kernels::reference::relu_backward)->Arg(4096);

BENCHMARK_MAIN();
