// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "corda/matrix.hpp"

namespace corda {

// Full singular value decomposition m = u * diag(sigma) * vt with
// R = min(rows, cols) columns in u, R rows in vt, and sigma descending.
struct SvdFactors {
  Matrix u;                   // rows x R, orthonormal columns
  std::vector<double> sigma;  // R values, descending, non-negative
  Matrix vt;                  // R x cols, orthonormal rows
};

// One-sided (Hestenes) Jacobi SVD. Deterministic for identical input bytes:
// fixed sweep order, fixed tie-breaking by original column index, and a sign
// convention that makes the first nonzero entry of every u column positive.
// Converges when every off-diagonal Gram entry satisfies
// |g_i . g_j| <= 1e-12 * ||g_i|| * ||g_j||.
SvdFactors svd(const Matrix& m);

// u * diag(sigma) * vt, the exact reconstruction of the factor triple.
Matrix svd_reconstruct(const SvdFactors& f);

// Sum of the leading `keep` rank-one terms sigma_i u_i vt_i.
Matrix svd_partial(const SvdFactors& f, int keep);

}  // namespace corda
