// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#include "corda/adapter.hpp"

#include <cmath>
#include <random>

#include "corda/rng.hpp"

namespace corda {

namespace {

void require_rank(const ContextFactors& f, const Matrix& w, int r, const char* op) {
  const int big_r = factor_rank(f);
  if (r < 1 || r > big_r) {
    throw InvalidArgumentError(std::string(op) + ": rank " + std::to_string(r) +
                               " outside [1, " + std::to_string(big_r) + "]");
  }
  if (f.u.rows() != w.rows() || f.vhat_t.cols() != w.cols()) {
    throw DimensionError(std::string(op) + ": factors do not match weight shape");
  }
}

// Build b and a from factor components [first, first + r) with the sqrt-sigma
// split b = u sqrt(sigma), a = sqrt(sigma) vhat_t.
DecomposedLayer slice_factors(const ContextFactors& f, const Matrix& w, int first, int r,
                              AdapterMode mode, const std::string& layer_id) {
  DecomposedLayer layer;
  layer.b = Matrix(w.rows(), r);
  layer.a = Matrix(r, w.cols());
  for (int t = 0; t < r; ++t) {
    const double root = std::sqrt(f.sigma[first + t]);
    for (int i = 0; i < w.rows(); ++i) layer.b(i, t) = f.u(i, first + t) * root;
    for (int j = 0; j < w.cols(); ++j) layer.a(t, j) = root * f.vhat_t(first + t, j);
  }
  layer.w_residual = w - multiply(layer.b, layer.a);
  layer.r = r;
  layer.mode = mode;
  layer.layer_id = layer_id;
  return layer;
}

}  // namespace

const char* to_string(AdapterMode m) {
  switch (m) {
    case AdapterMode::kpa: return "kpa";
    case AdapterMode::ipa: return "ipa";
    case AdapterMode::lora: return "lora";
    case AdapterMode::pissa: return "pissa";
  }
  return "unknown";
}

AdapterMode adapter_mode_from_string(const std::string& s) {
  if (s == "kpa") return AdapterMode::kpa;
  if (s == "ipa") return AdapterMode::ipa;
  if (s == "lora") return AdapterMode::lora;
  if (s == "pissa") return AdapterMode::pissa;
  throw InvalidArgumentError("unknown adapter mode '" + s + "'");
}

DecomposedLayer init_kpa(const ContextFactors& f, const Matrix& w, int r,
                         const std::string& layer_id) {
  require_rank(f, w, r, "init_kpa");
  return slice_factors(f, w, factor_rank(f) - r, r, AdapterMode::kpa, layer_id);
}

DecomposedLayer init_ipa(const ContextFactors& f, const Matrix& w, int r,
                         const std::string& layer_id) {
  require_rank(f, w, r, "init_ipa");
  return slice_factors(f, w, 0, r, AdapterMode::ipa, layer_id);
}

DecomposedLayer init_lora(const Matrix& w, int r, std::uint64_t seed,
                          const std::string& layer_id) {
  if (r < 1 || r > std::min(w.rows(), w.cols())) {
    throw InvalidArgumentError("init_lora: rank " + std::to_string(r) + " outside [1, " +
                               std::to_string(std::min(w.rows(), w.cols())) + "]");
  }
  if (!w.all_finite()) throw InvalidArgumentError("init_lora: weight has non-finite entries");
  DecomposedLayer layer;
  layer.w_residual = w;
  layer.b = Matrix(w.rows(), r);  // zeros: the adapter starts as a no-op
  layer.a = Matrix(r, w.cols());
  const double bound = std::sqrt(6.0 / w.cols());
  std::mt19937_64 engine = make_engine(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < w.cols(); ++j) layer.a(i, j) = dist(engine);
  }
  layer.r = r;
  layer.mode = AdapterMode::lora;
  layer.layer_id = layer_id;
  return layer;
}

DecomposedLayer init_pissa(const Matrix& w, int r, const std::string& layer_id) {
  ContextFactors f = plain_factors(w);
  require_rank(f, w, r, "init_pissa");
  return slice_factors(f, w, 0, r, AdapterMode::pissa, layer_id);
}

Matrix merge(const DecomposedLayer& layer) {
  return layer.w_residual + multiply(layer.b, layer.a);
}

Matrix adapter_apply(const DecomposedLayer& layer, const Matrix& x) {
  return multiply(layer.w_residual, x) + multiply(layer.b, multiply(layer.a, x));
}

}  // namespace corda
