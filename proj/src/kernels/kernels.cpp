#include "cmcrd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "cmcrd/errors.hpp"

namespace cmcrd::kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

struct GemmShape {
  std::size_t m, n, k;
};

GemmShape check_shape(Trans ta, Trans tb, const Matrix& a, const Matrix& b, const Matrix& c) {
  const std::size_t am = ta == Trans::No ? a.rows() : a.cols();
  const std::size_t ak = ta == Trans::No ? a.cols() : a.rows();
  const std::size_t bk = tb == Trans::No ? b.rows() : b.cols();
  const std::size_t bn = tb == Trans::No ? b.cols() : b.rows();
  if (ak != bk || c.rows() != am || c.cols() != bn) {
    throw ShapeError("gemm: incompatible shapes A" + a.shape_string() + " B" +
                     b.shape_string() + " C" + c.shape_string());
  }
  return {am, bn, ak};
}

void scale_output(double beta, Matrix& c) {
  if (beta == 0.0) {
    c.fill(0.0);
  } else if (beta != 1.0) {
    for (double& v : c.flat()) v *= beta;
  }
}

}  // namespace

void gemm(Trans ta, Trans tb, double alpha, const Matrix& a, const Matrix& b, double beta,
          Matrix& c) {
  const auto [m, n, k] = check_shape(ta, tb, a, b, c);
  scale_output(beta, c);
  if (m == 0 || n == 0 || k == 0 || alpha == 0.0) return;

  const double* __restrict ap = a.data();
  const double* __restrict bp = b.data();
  double* __restrict cp = c.data();
  const std::size_t lda = a.cols();
  const std::size_t ldb = b.cols();
  const bool parallel = m * n * k > kParallelWork;
  const auto rows = static_cast<std::ptrdiff_t>(m);

  if (ta == Trans::No && tb == Trans::No) {
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      double* crow = cp + i * n;
      const double* arow = ap + i * lda;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = alpha * arow[p];
        if (av == 0.0) continue;
        const double* brow = bp + p * ldb;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (ta == Trans::Yes && tb == Trans::No) {
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      double* crow = cp + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = alpha * ap[p * lda + i];
        if (av == 0.0) continue;
        const double* brow = bp + p * ldb;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (ta == Trans::No && tb == Trans::Yes) {
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      double* crow = cp + i * n;
      const double* arow = ap + i * lda;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = bp + j * ldb;
        double s = 0.0;
#pragma omp simd reduction(+ : s)
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        crow[j] += alpha * s;
      }
    }
  } else {
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      double* crow = cp + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += ap[p * lda + i] * bp[j * ldb + p];
        crow[j] += alpha * s;
      }
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b, Trans ta, Trans tb) {
  const std::size_t m = ta == Trans::No ? a.rows() : a.cols();
  const std::size_t n = tb == Trans::No ? b.cols() : b.rows();
  Matrix c(m, n);
  gemm(ta, tb, 1.0, a, b, 0.0, c);
  return c;
}

void add_row_vector(Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) throw ShapeError("add_row_vector: width mismatch");
  const auto rows = static_cast<std::ptrdiff_t>(m.rows());
  const std::size_t n = m.cols();
  double* __restrict p = m.data();
  const double* __restrict vp = v.data();
#pragma omp parallel for schedule(static) if (m.size() > kParallelWork)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
#pragma omp simd
    for (std::size_t c = 0; c < n; ++c) p[r * n + c] += vp[c];
  }
}

void column_sums(const Matrix& m, std::span<double> out) {
  if (out.size() != m.cols()) throw ShapeError("column_sums: width mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t n = m.cols();
  const double* __restrict p = m.data();
  double* __restrict o = out.data();
  // Rows are summed in order so the result does not depend on thread count.
  for (std::size_t r = 0; r < m.rows(); ++r) {
#pragma omp simd
    for (std::size_t c = 0; c < n; ++c) o[c] += p[r * n + c];
  }
}

void relu_inplace(Matrix& m) {
  auto values = m.flat();
  const auto size = static_cast<std::ptrdiff_t>(values.size());
  double* p = values.data();
#pragma omp parallel for simd schedule(static) if (m.size() > kParallelWork)
  for (std::ptrdiff_t i = 0; i < size; ++i) p[i] = p[i] > 0.0 ? p[i] : 0.0;
}

void relu_backward(const Matrix& activation, Matrix& grad) {
  if (!activation.same_shape(grad)) throw ShapeError("relu_backward: shape mismatch");
  const auto size = static_cast<std::ptrdiff_t>(grad.size());
  const double* a = activation.data();
  double* g = grad.data();
#pragma omp parallel for simd schedule(static) if (grad.size() > kParallelWork)
  for (std::ptrdiff_t i = 0; i < size; ++i) g[i] = a[i] > 0.0 ? g[i] : 0.0;
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
  Matrix probs(logits.rows(), logits.cols());
  const auto rows = static_cast<std::ptrdiff_t>(logits.rows());
  const std::size_t n = logits.cols();
  const double inv_t = 1.0 / temperature;
#pragma omp parallel for schedule(static) if (logits.size() > kParallelWork)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    auto in = logits.row(static_cast<std::size_t>(r));
    auto out = probs.row(static_cast<std::size_t>(r));
    double mx = in[0] * inv_t;
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, in[c] * inv_t);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      out[c] = std::exp(in[c] * inv_t - mx);
      total += out[c];
    }
    for (std::size_t c = 0; c < n; ++c) out[c] /= total;
  }
  return probs;
}

}  // namespace cmcrd::kernels
