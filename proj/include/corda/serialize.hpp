// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "corda/adapter.hpp"
#include "corda/covariance.hpp"
#include "corda/decompose.hpp"
#include "corda/nnet.hpp"

namespace corda {

// Binary artifact files. All integers and doubles are little-endian; doubles
// round-trip bit-for-bit. Every reader validates magic, version, and payload
// length and throws IoError on mismatch.
//
//   covariance  "CORDACOV"  version, d_in, columns_seen, damping_coeff, c
//   factors     "CORDAFAC"  version, method, shape, context, u, sigma, vhat_t
//   adapter     "CORDAADP"  version, mode, r, shape, id, w_residual, b, a
//   network     "CORDANET"  version, nonlinearity, seed, dims, layers

void save_covariance(const CovarianceStat& stat, const std::filesystem::path& path);
CovarianceStat load_covariance(const std::filesystem::path& path);

void save_factors(const ContextFactors& f, const std::filesystem::path& path);
ContextFactors load_factors(const std::filesystem::path& path);

void save_adapter(const DecomposedLayer& layer, const std::filesystem::path& path);
DecomposedLayer load_adapter(const std::filesystem::path& path);

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace corda
