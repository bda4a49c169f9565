// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "corda/error.hpp"

namespace corda {

// Dense row-major matrix of doubles. All routines in this library assume
// 64-bit arithmetic throughout; nothing here ever downcasts to float.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols);                             // zero-filled
  Matrix(int rows, int cols, std::vector<double> data);   // takes ownership

  static Matrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool all_finite() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double k, const Matrix& m);

// C = A B with the usual shape requirement a.cols == b.rows.
Matrix multiply(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

double frobenius_norm(const Matrix& m);

// Frobenius norm of (a - b); shapes must agree.
double frobenius_distance(const Matrix& a, const Matrix& b);

double max_abs(const Matrix& m);

struct InverseOptions {
  // Reject matrices whose Frobenius-norm condition estimate exceeds this.
  double condition_ceiling = 1e14;
};

struct InverseResult {
  Matrix inverse;
  // Frobenius distance of m * inverse from the identity, reported so callers
  // can judge the quality of the inverse instead of trusting it blindly.
  double identity_residual = 0.0;
  // ||m||_F * ||inverse||_F, a cheap upper-bias condition estimate.
  double condition_estimate = 0.0;
};

// Gauss-Jordan elimination with partial pivoting. Throws SingularMatrixError
// when a pivot collapses or the condition estimate crosses the ceiling.
InverseResult invert_detailed(const Matrix& m, const InverseOptions& opts = {});

// Same as invert_detailed but returns only the inverse.
Matrix invert(const Matrix& m, const InverseOptions& opts = {});

}  // namespace corda
