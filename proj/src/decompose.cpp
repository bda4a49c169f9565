// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#include "corda/decompose.hpp"

#include <algorithm>
#include <cmath>

namespace corda {

namespace {

constexpr double kScaleFloor = 1e-8;

void require_weight(const Matrix& w, const char* op) {
  if (w.rows() < 1 || w.cols() < 1) {
    throw DimensionError(std::string(op) + ": empty weight");
  }
  if (!w.all_finite()) {
    throw InvalidArgumentError(std::string(op) + ": weight has non-finite entries");
  }
}

}  // namespace

const char* to_string(DecomposeMethod m) {
  switch (m) {
    case DecomposeMethod::plain: return "plain";
    case DecomposeMethod::asvd: return "asvd";
    case DecomposeMethod::co_svd: return "co_svd";
  }
  return "unknown";
}

DecomposeMethod decompose_method_from_string(const std::string& s) {
  if (s == "plain") return DecomposeMethod::plain;
  if (s == "asvd") return DecomposeMethod::asvd;
  if (s == "co_svd") return DecomposeMethod::co_svd;
  throw InvalidArgumentError("unknown decomposition method '" + s + "'");
}

ContextFactors plain_factors(const Matrix& w, const std::string& source_context) {
  require_weight(w, "plain_factors");
  SvdFactors f = svd(w);
  ContextFactors out;
  out.u = std::move(f.u);
  out.sigma = std::move(f.sigma);
  out.vhat_t = std::move(f.vt);
  out.method = DecomposeMethod::plain;
  out.source_context = source_context;
  return out;
}

ContextFactors asvd_factors(const Matrix& w, const std::vector<double>& mean_abs,
                            const std::string& source_context) {
  require_weight(w, "asvd_factors");
  if (static_cast<int>(mean_abs.size()) != w.cols()) {
    throw DimensionError("asvd_factors: mean_abs length " + std::to_string(mean_abs.size()) +
                         " does not match d_in " + std::to_string(w.cols()));
  }
  std::vector<double> scale(mean_abs.size());
  for (std::size_t j = 0; j < mean_abs.size(); ++j) {
    const double v = mean_abs[j];
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidArgumentError("asvd_factors: mean_abs entries must be finite and >= 0");
    }
    // Floor keeps dead channels from collapsing the scaled problem.
    scale[j] = std::max(v, kScaleFloor);
  }
  Matrix scaled = w;
  for (int i = 0; i < w.rows(); ++i) {
    for (int j = 0; j < w.cols(); ++j) scaled(i, j) *= scale[j];
  }
  SvdFactors f = svd(scaled);
  Matrix vhat_t = std::move(f.vt);
  for (int i = 0; i < vhat_t.rows(); ++i) {
    for (int j = 0; j < vhat_t.cols(); ++j) vhat_t(i, j) /= scale[j];
  }
  ContextFactors out;
  out.u = std::move(f.u);
  out.sigma = std::move(f.sigma);
  out.vhat_t = std::move(vhat_t);
  out.method = DecomposeMethod::asvd;
  out.source_context = source_context;
  return out;
}

ContextFactors co_svd_factors(const Matrix& w, const CovarianceStat& stat,
                              const DampingConfig& cfg, const std::string& source_context) {
  require_weight(w, "co_svd_factors");
  if (stat.c.rows() != w.cols()) {
    throw DimensionError("co_svd_factors: covariance is " + std::to_string(stat.c.rows()) +
                         "-dimensional, weight expects " + std::to_string(w.cols()));
  }
  // Damping is idempotent, so an already-damped stat passes through at zero
  // additional coefficient and the inverse matches the stored matrix.
  CovarianceStat damped = stat;
  DampingResult damping = dampen(damped, cfg);
  SvdFactors f = svd(multiply(w, damped.c));
  ContextFactors out;
  out.u = std::move(f.u);
  out.sigma = std::move(f.sigma);
  out.vhat_t = multiply(f.vt, damping.inverse);
  out.method = DecomposeMethod::co_svd;
  out.source_context = source_context;
  return out;
}

Matrix truncate_reconstruct(const ContextFactors& f, int keep) {
  const int r = factor_rank(f);
  if (keep < 0 || keep > r) {
    throw InvalidArgumentError("truncate_reconstruct: keep " + std::to_string(keep) +
                               " outside [0, " + std::to_string(r) + "]");
  }
  Matrix out(f.u.rows(), f.vhat_t.cols());
  for (int i = 0; i < f.u.rows(); ++i) {
    for (int t = 0; t < keep; ++t) {
      const double w = f.u(i, t) * f.sigma[t];
      if (w == 0.0) continue;
      for (int j = 0; j < f.vhat_t.cols(); ++j) out(i, j) += w * f.vhat_t(t, j);
    }
  }
  return out;
}

int factor_rank(const ContextFactors& f) { return static_cast<int>(f.sigma.size()); }

}  // namespace corda
