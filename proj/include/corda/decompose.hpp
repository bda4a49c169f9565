// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "corda/covariance.hpp"
#include "corda/matrix.hpp"
#include "corda/svd.hpp"

namespace corda {

enum class DecomposeMethod { plain, asvd, co_svd };

const char* to_string(DecomposeMethod m);
DecomposeMethod decompose_method_from_string(const std::string& s);

// Factorization w ~= u * diag(sigma) * vhat_t with R = min(d_out, d_in)
// terms. For the plain method vhat_t has orthonormal rows; for the scaled and
// covariance-weighted methods the compensation factor is folded into vhat_t,
// so only u stays orthonormal. Ordering of sigma decides which rank-one
// components a truncation keeps.
struct ContextFactors {
  Matrix u;                   // d_out x R, orthonormal columns
  std::vector<double> sigma;  // R values, descending
  Matrix vhat_t;              // R x d_in
  DecomposeMethod method = DecomposeMethod::plain;
  std::string source_context; // dataset label the weighting came from
};

// SVD of the weight alone.
ContextFactors plain_factors(const Matrix& w, const std::string& source_context = "none");

// SVD of w * diag(s) where s_j = max(mean_abs[j], 1e-8); the scales are
// divided back out of vhat_t. mean_abs holds per-input-channel mean absolute
// activation values.
ContextFactors asvd_factors(const Matrix& w, const std::vector<double>& mean_abs,
                            const std::string& source_context = "calibration");

// Covariance-weighted SVD: dampen a copy of the accumulator, factor w * C,
// and fold C^-1 into vhat_t so the triple still reconstructs w. Components
// are thereby ranked by how much of the context-weighted energy they carry.
ContextFactors co_svd_factors(const Matrix& w, const CovarianceStat& stat,
                              const DampingConfig& cfg = {},
                              const std::string& source_context = "calibration");

// Sum of the leading `keep` rank-one components.
Matrix truncate_reconstruct(const ContextFactors& f, int keep);

int factor_rank(const ContextFactors& f);

}  // namespace corda
