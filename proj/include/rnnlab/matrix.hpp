// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrix of doubles and the handful of kernels the recurrent
// cells, the BPTT engine and the optimizers are built from.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rnnlab {

class Rng;

/// Raised whenever operand shapes do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  /// Nested-list literal, one inner list per row.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class ElementwiseOp { Add, Sub, Hadamard };

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// out += a * b^T
void add_matmul_nt(Matrix& out, const Matrix& a, const Matrix& b);
/// out += a^T * b
void add_matmul_tn(Matrix& out, const Matrix& a, const Matrix& b);
/// out += a * b
void add_matmul(Matrix& out, const Matrix& a, const Matrix& b);

Matrix elementwise(const Matrix& a, const Matrix& b, ElementwiseOp op);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
/// out += b
void add_inplace(Matrix& out, const Matrix& b);
/// Adds the 1xN row vector `bias` to every row of `a`.
void add_row_inplace(Matrix& a, const Matrix& bias);
/// out(0, j) += sum_i a(i, j); `out` is 1 x a.cols().
void add_column_sums(Matrix& out, const Matrix& a);

Matrix sigmoid(const Matrix& a);
Matrix tanh(const Matrix& a);
double sigmoid(double x);

Matrix softmax_rows(const Matrix& a);
/// Mean over rows of -ln(probs[row, targets[row]]).
double cross_entropy(const Matrix& probs, std::span<const int> targets);

Matrix transpose(const Matrix& a);
Matrix scale(const Matrix& a, double k);
double frobenius_norm(const Matrix& a);
std::size_t argmax_row(const Matrix& a, std::size_t row);

Matrix zeros(std::size_t rows, std::size_t cols);
Matrix identity(std::size_t n);
Matrix one_hot(std::size_t index, std::size_t width);
/// Uniform on +-sqrt(6 / (rows + cols)).
Matrix glorot_init(std::size_t rows, std::size_t cols, Rng& rng);

/// Throws std::domain_error naming `what` if any entry is NaN or infinite.
void check_finite(const Matrix& a, const std::string& what = "matrix");

}  // namespace rnnlab
