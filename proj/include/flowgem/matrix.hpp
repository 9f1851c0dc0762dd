#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "flowgem/error.hpp"

namespace flowgem {

/// Dense row-major matrix of doubles. Rows are samples, columns are variables.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Copies the listed columns of `m`, in order, into a new matrix.
inline Matrix select_columns(const Matrix& m, std::span<const std::size_t> cols) {
  Matrix out(m.rows(), cols.size());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto src = m.row(i);
    auto dst = out.row(i);
    for (std::size_t k = 0; k < cols.size(); ++k) dst[k] = src[cols[k]];
  }
  return out;
}

inline Matrix from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix out(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != out.cols())
      throw DataError(DataErrc::dimension_mismatch, "from_rows: ragged input");
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = rows[i][j];
  }
  return out;
}

}  // namespace flowgem
