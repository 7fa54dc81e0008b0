#include "cmcrd/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "cmcrd/errors.hpp"

namespace cmcrd {

void Matrix::fill(double v) noexcept { std::fill(values_.begin(), values_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw ShapeError("gather_rows: index out of range");
    std::copy_n(values_.data() + indices[i] * cols_, cols_, out.data() + i * cols_);
  }
  return out;
}

std::string Matrix::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

}  // namespace cmcrd
