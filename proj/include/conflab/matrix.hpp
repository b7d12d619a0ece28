#pragma once

#include <cmath>
#include <initializer_list>
#include <span>
#include <vector>

#include "conflab/error.hpp"

namespace conflab {

/// Dense row-major matrix of doubles. The whole pipeline runs in 64-bit
/// precision so finite-difference oracles stay meaningful.
class Matrix {
 public:
  Matrix() = default;

  Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) {
      throw ValidationError("Matrix dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0);
  }

  static Matrix from_values(int rows, int cols, std::initializer_list<double> values) {
    Matrix m(rows, cols);
    if (values.size() != m.data_.size()) {
      throw ValidationError("Matrix::from_values: value count does not match rows*cols");
    }
    std::size_t i = 0;
    for (double v : values) m.data_[i++] = v;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<double> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Matrix& other) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

}  // namespace conflab
