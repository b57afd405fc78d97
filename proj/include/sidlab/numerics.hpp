#pragma once

#include <cstddef>
#include <vector>

namespace sidlab {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Max-subtracted softmax. Throws DimensionError on empty input and
// NumericError on any non-finite entry.
Vector softmax(const Vector& x);

// Same, but entries equal to -inf are allowed and map to exactly 0.
// At least one entry must be finite.
Vector masked_softmax(const Vector& x);

struct AttentionResult {
  Matrix r;  // A * V
  Matrix a;  // row-stochastic, lower triangular
};

// A = softmax_rows(Q K^T / sqrt(d_l) + M), M the strict upper -inf mask.
AttentionResult causal_attention(const Matrix& q, const Matrix& k, const Matrix& v, int d_l);

Matrix matmul(const Matrix& a, const Matrix& b);

}  // namespace sidlab
