#include "pidistill/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "pidistill/error.hpp"

namespace pidistill {

Matrix Matrix::from_values(std::size_t rows, std::size_t cols, std::vector<double> data) {
  if (data.size() != rows * cols) {
    throw DataError("matrix data has " + std::to_string(data.size()) + " values, expected " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.data_ = std::move(data);
  for (std::size_t i = 0; i < m.data_.size(); ++i) {
    if (!std::isfinite(m.data_[i])) {
      throw DataError("non-finite matrix entry at (" + std::to_string(i / std::max<std::size_t>(cols, 1)) +
                      ", " + std::to_string(cols ? i % cols : 0) + ")");
    }
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

}  // namespace pidistill
