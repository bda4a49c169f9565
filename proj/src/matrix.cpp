// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#include "corda/matrix.hpp"

#include <cmath>
#include <limits>

namespace corda {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows <= 0 || cols <= 0) {
    throw DimensionError("Matrix: dimensions must be positive, got " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, std::vector<double> data) : rows_(rows), cols_(cols) {
  if (rows <= 0 || cols <= 0) {
    throw DimensionError("Matrix: dimensions must be positive, got " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (data.size() != static_cast<std::size_t>(rows) * cols) {
    throw DimensionError("Matrix: data length " + std::to_string(data.size()) +
                         " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  data_ = std::move(data);
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator+");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.storage()[i] += b.storage()[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator-");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.storage()[i] -= b.storage()[i];
  return out;
}

Matrix operator*(double k, const Matrix& m) {
  Matrix out = m;
  for (double& v : out.storage()) v *= k;
  return out;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("multiply: inner dimensions " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " differ");
  }
  Matrix c(a.rows(), b.cols());
  // i-k-j order streams both b and c row-wise.
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.data() + static_cast<std::size_t>(k) * b.cols();
      double* crow = c.data() + static_cast<std::size_t>(i) * c.cols();
      for (int j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  }
  return t;
}

double frobenius_norm(const Matrix& m) {
  double sum = 0.0;
  for (double v : m.storage()) sum += v * v;
  return std::sqrt(sum);
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_distance");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.storage()[i] - b.storage()[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.storage()) best = std::max(best, std::abs(v));
  return best;
}

InverseResult invert_detailed(const Matrix& m, const InverseOptions& opts) {
  if (m.rows() != m.cols()) {
    throw DimensionError("invert: matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", expected square");
  }
  if (!m.all_finite()) throw InvalidArgumentError("invert: input has non-finite entries");

  const int n = m.rows();
  Matrix a = m;
  Matrix inv = Matrix::identity(n);
  // Pivots smaller than this are indistinguishable from zero at working scale.
  const double pivot_tol = max_abs(m) * n * std::numeric_limits<double>::epsilon();

  for (int col = 0; col < n; ++col) {
    int pivot_row = col;
    double pivot_mag = std::abs(a(col, col));
    for (int r = col + 1; r < n; ++r) {
      const double mag = std::abs(a(r, col));
      if (mag > pivot_mag) {
        pivot_mag = mag;
        pivot_row = r;
      }
    }
    if (pivot_mag <= pivot_tol) {
      throw SingularMatrixError("invert: singular at column " + std::to_string(col) +
                                " (pivot " + std::to_string(pivot_mag) + ")");
    }
    if (pivot_row != col) {
      for (int j = 0; j < n; ++j) {
        std::swap(a(col, j), a(pivot_row, j));
        std::swap(inv(col, j), inv(pivot_row, j));
      }
    }
    const double pivot = a(col, col);
    for (int j = 0; j < n; ++j) {
      a(col, j) /= pivot;
      inv(col, j) /= pivot;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      if (f == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        a(r, j) -= f * a(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }

  InverseResult result;
  result.condition_estimate = frobenius_norm(m) * frobenius_norm(inv);
  if (result.condition_estimate > opts.condition_ceiling) {
    throw SingularMatrixError("invert: condition estimate " +
                              std::to_string(result.condition_estimate) +
                              " exceeds ceiling " + std::to_string(opts.condition_ceiling));
  }
  result.identity_residual = frobenius_distance(multiply(m, inv), Matrix::identity(n));
  result.inverse = std::move(inv);
  return result;
}

Matrix invert(const Matrix& m, const InverseOptions& opts) {
  return invert_detailed(m, opts).inverse;
}

}  // namespace corda
