// Serial reference kernels. Written for obviousness, not speed; the tests
// hold the parallel kernels to these.

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "cmcrd/errors.hpp"
#include "cmcrd/kernels.hpp"

namespace cmcrd::kernels::reference {

void gemm(Trans ta, Trans tb, double alpha, const Matrix& a, const Matrix& b, double beta,
          Matrix& c) {
  const std::size_t m = ta == Trans::No ? a.rows() : a.cols();
  const std::size_t k = ta == Trans::No ? a.cols() : a.rows();
  const std::size_t kb = tb == Trans::No ? b.rows() : b.cols();
  const std::size_t n = tb == Trans::No ? b.cols() : b.rows();
  if (k != kb || c.rows() != m || c.cols() != n) throw ShapeError("reference::gemm: shapes");

  auto op_a = [&](std::size_t i, std::size_t p) { return ta == Trans::No ? a(i, p) : a(p, i); };
  auto op_b = [&](std::size_t p, std::size_t j) { return tb == Trans::No ? b(p, j) : b(j, p); };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += op_a(i, p) * op_b(p, j);
      c(i, j) = alpha * s + (beta == 0.0 ? 0.0 : beta * c(i, j));
    }
  }
}

void add_row_vector(Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) throw ShapeError("reference::add_row_vector: width");
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) += v[c];
}

void column_sums(const Matrix& m, std::span<double> out) {
  if (out.size() != m.cols()) throw ShapeError("reference::column_sums: width");
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, c);
    out[c] = s;
  }
}

void relu_inplace(Matrix& m) {
  for (double& v : m.flat()) v = std::max(v, 0.0);
}

void relu_backward(const Matrix& activation, Matrix& grad) {
  if (!activation.same_shape(grad)) throw ShapeError("reference::relu_backward: shape");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activation.flat()[i] > 0.0)) grad.flat()[i] = 0.0;
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < logits.cols(); ++c) mx = std::max(mx, logits(r, c) / temperature);
    double total = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) total += std::exp(logits(r, c) / temperature - mx);
    for (std::size_t c = 0; c < logits.cols(); ++c)
      probs(r, c) = std::exp(logits(r, c) / temperature - mx) / total;
  }
  return probs;
}

}  // namespace cmcrd::kernels::reference
