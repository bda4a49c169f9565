// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "corda/matrix.hpp"

namespace corda {

// Running sum of outer products of layer-input columns. The sum is kept raw
// (never divided by the column count) so shards merge by plain addition.
struct CovarianceStat {
  Matrix c;                        // d_in x d_in, symmetric PSD
  std::uint64_t columns_seen = 0;  // number of accumulated columns
  double damping_coeff = 0.0;      // total diagonal coefficient applied so far
};

CovarianceStat make_stat(int d_in);

// Adds batch * batch^T for a d_in x n batch of input columns. The upper
// triangle is computed once and mirrored, keeping c exactly symmetric.
void accumulate(CovarianceStat& stat, const Matrix& batch);

// Sums two shard accumulators over disjoint samples. Both must be undamped.
CovarianceStat merge_stats(const CovarianceStat& a, const CovarianceStat& b);

struct DampingConfig {
  double initial_coeff = 1e-6;      // first diagonal multiplier tried
  double identity_threshold = 1e-6; // residual bound is threshold * d_in
  int max_doublings = 40;
  double absolute_floor = 1e-12;    // additive term floor for tiny diagonals
};

struct DampingResult {
  double applied_coeff = 0.0;  // the lambda chosen from {0, c0, 2 c0, 4 c0, ...}
  Matrix inverse;              // inverse of the damped matrix
  double identity_residual = 0.0;
  int doublings = 0;           // retries consumed before acceptance
};

// Finds the smallest coefficient lambda in {0, c0 * 2^k} such that
// c + max(lambda * mean_diag, absolute_floor) * I inverts with
// ||C C^-1 - I||_F <= identity_threshold * d_in, then applies it in place.
// The additive term never drops below absolute_floor once lambda > 0, which
// keeps an all-zero accumulator invertible. Already-damped stats pass at
// lambda = 0 and are left untouched. Throws DampingError when the doubling
// budget runs out.
DampingResult dampen(CovarianceStat& stat, const DampingConfig& cfg = {});

}  // namespace corda
