// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#include "corda/covariance.hpp"

#include <cmath>
#include <string>

namespace corda {

namespace {

void require_symmetric(const Matrix& c, const char* op) {
  for (int i = 0; i < c.rows(); ++i) {
    for (int j = i + 1; j < c.cols(); ++j) {
      if (std::abs(c(i, j) - c(j, i)) > 1e-12) {
        throw InvalidArgumentError(std::string(op) + ": covariance not symmetric at (" +
                                   std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
}

}  // namespace

CovarianceStat make_stat(int d_in) {
  CovarianceStat stat;
  stat.c = Matrix(d_in, d_in);
  return stat;
}

void accumulate(CovarianceStat& stat, const Matrix& batch) {
  if (batch.rows() != stat.c.rows()) {
    throw DimensionError("accumulate: batch has " + std::to_string(batch.rows()) +
                         " rows, stat expects " + std::to_string(stat.c.rows()));
  }
  if (batch.cols() < 1) throw DimensionError("accumulate: batch has no columns");
  if (!batch.all_finite()) {
    throw InvalidArgumentError("accumulate: batch has non-finite entries");
  }
  const int d = batch.rows();
  const int n = batch.cols();
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += batch(i, k) * batch(j, k);
      stat.c(i, j) += s;
      if (i != j) stat.c(j, i) = stat.c(i, j);
    }
  }
  stat.columns_seen += static_cast<std::uint64_t>(n);
}

CovarianceStat merge_stats(const CovarianceStat& a, const CovarianceStat& b) {
  if (a.c.rows() != b.c.rows()) {
    throw DimensionError("merge_stats: dimension mismatch");
  }
  if (a.damping_coeff != 0.0 || b.damping_coeff != 0.0) {
    throw InvalidArgumentError("merge_stats: refuse to merge damped accumulators");
  }
  CovarianceStat out;
  out.c = a.c + b.c;
  out.columns_seen = a.columns_seen + b.columns_seen;
  return out;
}

DampingResult dampen(CovarianceStat& stat, const DampingConfig& cfg) {
  if (stat.c.rows() != stat.c.cols()) {
    throw DimensionError("dampen: covariance must be square");
  }
  if (!stat.c.all_finite()) {
    throw InvalidArgumentError("dampen: covariance has non-finite entries");
  }
  require_symmetric(stat.c, "dampen");
  if (cfg.initial_coeff <= 0.0 || cfg.identity_threshold <= 0.0 || cfg.max_doublings < 1 ||
      cfg.absolute_floor <= 0.0) {
    throw InvalidArgumentError("dampen: config values must be positive");
  }

  const int d = stat.c.rows();
  double mean_diag = 0.0;
  for (int i = 0; i < d; ++i) mean_diag += stat.c(i, i);
  mean_diag /= d;

  const double residual_bound = cfg.identity_threshold * d;

  auto attempt = [&](double add) -> InverseResult {
    Matrix trial = stat.c;
    for (int i = 0; i < d; ++i) trial(i, i) += add;
    return invert_detailed(trial);
  };

  double lambda = 0.0;
  for (int retry = 0; retry <= cfg.max_doublings; ++retry) {
    const double add = (lambda == 0.0) ? 0.0 : std::max(lambda * mean_diag, cfg.absolute_floor);
    bool ok = false;
    InverseResult inv;
    try {
      inv = attempt(add);
      ok = inv.identity_residual <= residual_bound;
    } catch (const SingularMatrixError&) {
      ok = false;
    }
    if (ok) {
      for (int i = 0; i < d; ++i) stat.c(i, i) += add;
      stat.damping_coeff += lambda;
      DampingResult result;
      result.applied_coeff = lambda;
      result.inverse = std::move(inv.inverse);
      result.identity_residual = inv.identity_residual;
      result.doublings = retry;
      return result;
    }
    lambda = (lambda == 0.0) ? cfg.initial_coeff : lambda * 2.0;
  }
  throw DampingError("dampen: no acceptable coefficient within " +
                     std::to_string(cfg.max_doublings) + " doublings");
}

}  // namespace corda
