// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "rnnlab/matrix.hpp"
#include "rnnlab/rng.hpp"

using namespace rnnlab;

namespace {

Matrix triple_loop(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.uniform(-2.0, 2.0);
  return m;
}

void expect_near(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_TRUE(a.same_shape(b)) << a.shape_string() << " vs " << b.shape_string();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.flat()[i], b.flat()[i], tol) << i;
}

}  // namespace

TEST(Matmul, IdentityIsNeutral) {
  Matrix a{{1, 2}, {3, 4}};
  EXPECT_EQ(matmul(identity(2), a), a);
  EXPECT_EQ(matmul(a, identity(2)), a);
}

TEST(Matmul, HandComputed) {
  Matrix a{{1, 2}, {3, 4}};
  Matrix b{{5, 6}, {7, 8}};
  EXPECT_EQ(matmul(a, b), (Matrix{{19, 22}, {43, 50}}));
  Matrix row{{1, 2, 3}};
  Matrix col{{4}, {5}, {6}};
  EXPECT_EQ(matmul(row, col), (Matrix{{32}}));
}

TEST(Matmul, AgreesWithTripleLoop) {
  Rng rng(7);
  Matrix a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng);
  expect_near(matmul(a, b), triple_loop(a, b), 1e-12);
  Matrix c = random_matrix(5, 5, rng), d = random_matrix(5, 5, rng);
  expect_near(matmul(c, d), triple_loop(c, d), 1e-12);
}

TEST(Matmul, TransposedVariants) {
  Rng rng(8);
  Matrix a = random_matrix(3, 4, rng), b = random_matrix(2, 4, rng), c = random_matrix(3, 2, rng);
  expect_near(matmul_nt(a, b), triple_loop(a, transpose(b)), 1e-12);
  expect_near(matmul_tn(a, c), triple_loop(transpose(a), c), 1e-12);

  Matrix acc(3, 2, 1.0);
  add_matmul_nt(acc, a, b);
  expect_near(acc, add(Matrix(3, 2, 1.0), triple_loop(a, transpose(b))), 1e-12);
  Matrix acc2(4, 2, -1.0);
  add_matmul_tn(acc2, a, c);
  expect_near(acc2, add(Matrix(4, 2, -1.0), triple_loop(transpose(a), c)), 1e-12);
  Matrix acc3(3, 2);
  add_matmul(acc3, a, transpose(b));
  expect_near(acc3, triple_loop(a, transpose(b)), 1e-12);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  EXPECT_THROW(matmul_nt(Matrix(2, 3), Matrix(2, 4)), ShapeError);
  Matrix out(2, 2);
  EXPECT_THROW(add_matmul(out, Matrix(2, 3), Matrix(3, 3)), ShapeError);
}

TEST(Elementwise, Examples) {
  Matrix a{{1, 2}, {3, 4}};
  Matrix b{{10, 20}, {30, 40}};
  EXPECT_EQ(add(a, b), (Matrix{{11, 22}, {33, 44}}));
  EXPECT_EQ(sub(b, a), (Matrix{{9, 18}, {27, 36}}));
  EXPECT_EQ(hadamard(a, b), (Matrix{{10, 40}, {90, 160}}));
  EXPECT_EQ(elementwise(a, b, ElementwiseOp::Hadamard), hadamard(a, b));
  EXPECT_THROW(add(a, Matrix(2, 3)), ShapeError);

  Matrix c = a;
  add_inplace(c, b);
  EXPECT_EQ(c, add(a, b));
  add_row_inplace(c, Matrix{{1, -1}});
  EXPECT_EQ(c, (Matrix{{12, 21}, {34, 43}}));
  Matrix sums(1, 2);
  add_column_sums(sums, a);
  EXPECT_EQ(sums, (Matrix{{4, 6}}));
}

TEST(Activation, SigmoidAndTanh) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(2.0), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(sigmoid(800.0), 1.0);
  Matrix s = sigmoid(Matrix{{0, 30, -30}});
  EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
  EXPECT_GT(s(0, 1), 1.0 - 1e-12);
  EXPECT_LT(s(0, 2), 1e-12);
  Matrix t = rnnlab::tanh(Matrix{{0, 0.5, -0.5}});
  EXPECT_EQ(t(0, 0), 0.0);
  EXPECT_NEAR(t(0, 1), 0.46211715726000974, 1e-15);
  EXPECT_NEAR(t(0, 2), -t(0, 1), 1e-15);
}

TEST(Softmax, RowsSumToOne) {
  Matrix p = softmax_rows(Matrix{{0, 0, 0, 0}});
  for (double v : p.flat()) EXPECT_DOUBLE_EQ(v, 0.25);

  Matrix big = softmax_rows(Matrix{{1000, 0}});
  EXPECT_DOUBLE_EQ(big(0, 0), 1.0);
  EXPECT_FALSE(std::isnan(big(0, 1)));
  EXPECT_NEAR(big(0, 1), 0.0, 1e-300);

  Rng rng(3);
  Matrix r = softmax_rows(random_matrix(6, 5, rng));
  for (std::size_t i = 0; i < r.rows(); ++i) {
    double sum = 0.0;
    for (double v : r.row(i)) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(CrossEntropy, UniformIsLogK) {
  for (std::size_t k : {2u, 8u, 9u, 10u}) {
    Matrix p(3, k, 1.0 / static_cast<double>(k));
    std::vector<int> t{0, static_cast<int>(k) - 1, 1};
    EXPECT_NEAR(cross_entropy(p, t), std::log(static_cast<double>(k)), 1e-14);
  }
}

TEST(CrossEntropy, PerRowMean) {
  Matrix p{{0.7, 0.2, 0.1}, {0.1, 0.1, 0.8}};
  std::vector<int> t{0, 1};
  EXPECT_NEAR(cross_entropy(p, t), -(std::log(0.7) + std::log(0.1)) / 2.0, 1e-15);
}

TEST(CrossEntropy, Errors) {
  Matrix p(2, 3, 1.0 / 3.0);
  std::vector<int> bad{0, 3};
  EXPECT_THROW(cross_entropy(p, bad), std::out_of_range);
  std::vector<int> negative{0, -2};
  EXPECT_THROW(cross_entropy(p, negative), std::out_of_range);
  std::vector<int> short_targets{0};
  EXPECT_THROW(cross_entropy(p, short_targets), ShapeError);
}

TEST(Construction, OneHotAndZeros) {
  EXPECT_EQ(one_hot(2, 4), (Matrix{{0, 0, 1, 0}}));
  EXPECT_THROW(one_hot(4, 4), std::out_of_range);
  Matrix z = zeros(3, 2);
  EXPECT_EQ(z.rows(), 3u);
  EXPECT_EQ(z.cols(), 2u);
  for (double v : z.flat()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Construction, GlorotBound) {
  Rng rng(11);
  const std::size_t r = 64, c = 10;
  const double bound = std::sqrt(6.0 / static_cast<double>(r + c));
  double lo = 1.0, hi = -1.0;
  std::size_t draws = 0;
  while (draws < 10000) {
    Matrix m = glorot_init(r, c, rng);
    for (double v : m.flat()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++draws;
    }
  }
  EXPECT_GE(lo, -bound);
  EXPECT_LE(hi, bound);
  EXPECT_LT(lo, -0.95 * bound);
  EXPECT_GT(hi, 0.95 * bound);
}

TEST(Construction, SeededDeterminism) {
  Rng a(42), b(42), c(43);
  Matrix ma = glorot_init(5, 7, a), mb = glorot_init(5, 7, b), mc = glorot_init(5, 7, c);
  EXPECT_EQ(ma, mb);
  EXPECT_NE(ma, mc);
}

TEST(Reductions, TransposeScaleNorm) {
  Matrix a{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(transpose(a), (Matrix{{1, 4}, {2, 5}, {3, 6}}));
  EXPECT_EQ(transpose(transpose(a)), a);
  EXPECT_EQ(scale(a, -2.0), (Matrix{{-2, -4, -6}, {-8, -10, -12}}));
  EXPECT_DOUBLE_EQ(frobenius_norm(Matrix{{3, 4}}), 5.0);
  EXPECT_EQ(argmax_row(a, 1), 2u);
  EXPECT_EQ(argmax_row(Matrix{{0.1, 0.7, 0.2}}, 0), 1u);
}

TEST(Reductions, CheckFinite) {
  Matrix a{{1, 2}};
  EXPECT_NO_THROW(check_finite(a));
  a(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(check_finite(a, "a"), std::domain_error);
  a(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(check_finite(a), std::domain_error);
}
