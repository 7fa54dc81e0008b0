#pragma once

// Dense numeric kernels used by every model and loss. The default entry
// points are OpenMP-parallel; `kernels::reference` holds straightforward
// serial versions that the tests use as oracles and the benchmark compares
// against.

#include <span>

#include "cmcrd/matrix.hpp"

namespace cmcrd::kernels {

enum class Trans { No, Yes };

/// C = alpha * op(A) * op(B) + beta * C. C must already have the result
/// shape; throws ShapeError otherwise.
void gemm(Trans trans_a, Trans trans_b, double alpha, const Matrix& a, const Matrix& b,
          double beta, Matrix& c);

/// Convenience wrapper returning op(A) * op(B).
Matrix matmul(const Matrix& a, const Matrix& b, Trans trans_a = Trans::No,
              Trans trans_b = Trans::No);

/// m[r, :] += v for every row.
void add_row_vector(Matrix& m, std::span<const double> v);

/// out[c] = sum over rows of m[r, c].
void column_sums(const Matrix& m, std::span<double> out);

void relu_inplace(Matrix& m);

/// grad[i] = 0 wherever activation[i] <= 0.
void relu_backward(const Matrix& activation, Matrix& grad);

/// Row-wise softmax of logits / temperature, computed with max-shift.
Matrix softmax_rows(const Matrix& logits, double temperature = 1.0);

namespace reference {

void gemm(Trans trans_a, Trans trans_b, double alpha, const Matrix& a, const Matrix& b,
          double beta, Matrix& c);
void add_row_vector(Matrix& m, std::span<const double> v);
void column_sums(const Matrix& m, std::span<double> out);
void relu_inplace(Matrix& m);
void relu_backward(const Matrix& activation, Matrix& grad);
Matrix softmax_rows(const Matrix& logits, double temperature = 1.0);

}  // namespace reference

}  // namespace cmcrd::kernels
