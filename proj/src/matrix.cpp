// SPDX-License-Identifier: Apache-2.0

#include "rnnlab/matrix.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rnnlab/rng.hpp"

namespace rnnlab {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
  return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

MutMap view(Matrix& m) {
  return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                   b.shape_string());
}

void require_same(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_fail(op, a, b);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                     " does not match " + shape_string());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

std::string Matrix::shape_string() const {
  std::ostringstream os;
  os << '(' << rows_ << 'x' << cols_ << ')';
  return os.str();
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_fail("matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

void add_matmul_nt(Matrix& out, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows()) {
    shape_fail("add_matmul_nt", a, b);
  }
  view(out).noalias() += view(a) * view(b).transpose();
}

void add_matmul_tn(Matrix& out, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    shape_fail("add_matmul_tn", a, b);
  }
  view(out).noalias() += view(a).transpose() * view(b);
}

void add_matmul(Matrix& out, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols()) {
    shape_fail("add_matmul", a, b);
  }
  view(out).noalias() += view(a) * view(b);
}

Matrix elementwise(const Matrix& a, const Matrix& b, ElementwiseOp op) {
  require_same("elementwise", a, b);
  Matrix out(a.rows(), a.cols());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const std::size_t n = a.size();
  switch (op) {
    case ElementwiseOp::Add:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
      break;
    case ElementwiseOp::Sub:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
      break;
    case ElementwiseOp::Hadamard:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
      break;
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) { return elementwise(a, b, ElementwiseOp::Add); }
Matrix sub(const Matrix& a, const Matrix& b) { return elementwise(a, b, ElementwiseOp::Sub); }
Matrix hadamard(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, ElementwiseOp::Hadamard);
}

void add_inplace(Matrix& out, const Matrix& b) {
  require_same("add_inplace", out, b);
  double* po = out.data();
  const double* pb = b.data();
  for (std::size_t i = 0, n = out.size(); i < n; ++i) po[i] += pb[i];
}

void add_row_inplace(Matrix& a, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) shape_fail("add_row_inplace", a, bias);
  const double* pb = bias.data();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double* pa = a.data() + r * a.cols();
    for (std::size_t c = 0; c < a.cols(); ++c) pa[c] += pb[c];
  }
}

void add_column_sums(Matrix& out, const Matrix& a) {
  if (out.rows() != 1 || out.cols() != a.cols()) shape_fail("add_column_sums", out, a);
  double* po = out.data();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* pa = a.data() + r * a.cols();
    for (std::size_t c = 0; c < a.cols(); ++c) po[c] += pa[c];
  }
}

double sigmoid(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = sigmoid(a.data()[i]);
  return out;
}

Matrix tanh(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = std::tanh(a.data()[i]);
  return out;
}

Matrix softmax_rows(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto in = a.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

double cross_entropy(const Matrix& probs, std::span<const int> targets) {
  if (targets.size() != probs.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     probs.shape_string() + " probabilities");
  }
  if (targets.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= probs.cols()) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                              std::to_string(probs.cols()) + ")");
    }
    total -= std::log(probs(r, static_cast<std::size_t>(t)));
  }
  return total / static_cast<double>(probs.rows());
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

Matrix scale(const Matrix& a, double k) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * k;
  return out;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.flat()) s += v * v;
  return std::sqrt(s);
}

std::size_t argmax_row(const Matrix& a, std::size_t row) {
  auto r = a.row(row);
  return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

Matrix identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Matrix one_hot(std::size_t index, std::size_t width) {
  if (index >= width) {
    throw std::out_of_range("one_hot: index " + std::to_string(index) + " >= width " +
                            std::to_string(width));
  }
  Matrix out(1, width);
  out(0, index) = 1.0;
  return out;
}

Matrix glorot_init(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix out(rows, cols);
  for (double& v : out.flat()) v = rng.uniform(-limit, limit);
  return out;
}

void check_finite(const Matrix& a, const std::string& what) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a.data()[i])) {
      throw std::domain_error(what + ": non-finite entry at flat index " + std::to_string(i));
    }
  }
}

}  // namespace rnnlab
