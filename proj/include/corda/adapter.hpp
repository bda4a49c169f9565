// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "corda/decompose.hpp"
#include "corda/matrix.hpp"

namespace corda {

enum class AdapterMode { kpa, ipa, lora, pissa };

const char* to_string(AdapterMode m);
AdapterMode adapter_mode_from_string(const std::string& s);

// A linear layer split into a frozen residual and a trainable rank-r pair.
// The layer computes w_residual * x + b * (a * x); at init this equals the
// original weight applied to x because w_residual is the exact difference
// w - b * a rather than a partial reconstruction sum.
struct DecomposedLayer {
  Matrix w_residual;  // d_out x d_in, frozen during adapter fine-tuning
  Matrix b;           // d_out x r
  Matrix a;           // r x d_in
  int r = 0;
  AdapterMode mode = AdapterMode::lora;
  std::string layer_id;
};

// Knowledge-preserving split: the adapter takes the r smallest-sigma
// components, so fine-tuning moves only the directions the context weighting
// ranked least important.
DecomposedLayer init_kpa(const ContextFactors& f, const Matrix& w, int r,
                         const std::string& layer_id = "");

// Instruction-previewing split: the adapter takes the r largest-sigma
// components, the ones the context weighting ranked most important.
DecomposedLayer init_ipa(const ContextFactors& f, const Matrix& w, int r,
                         const std::string& layer_id = "");

// Classic baseline: b starts at zero, a is Kaiming-uniform in
// [-sqrt(6 / d_in), sqrt(6 / d_in)], and the full weight stays frozen.
DecomposedLayer init_lora(const Matrix& w, int r, std::uint64_t seed,
                          const std::string& layer_id = "");

// Principal-components baseline: the largest-r split of the plain SVD.
DecomposedLayer init_pissa(const Matrix& w, int r, const std::string& layer_id = "");

// w_residual + b * a, the single dense weight equivalent to the layer.
Matrix merge(const DecomposedLayer& layer);

// w_residual * x + b * (a * x), the inference path of the decomposed layer.
Matrix adapter_apply(const DecomposedLayer& layer, const Matrix& x);

}  // namespace corda
