// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#include "corda/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace corda {

namespace {

constexpr double kOffDiagTol = 1e-12;
constexpr int kMaxSweeps = 64;

// Orthogonalize the zero-sigma columns of u against everything already
// present. Candidates are taken from the standard basis in index order so the
// completed basis is a pure function of the input; a candidate is accepted
// once its residual keeps at least half of its length squared.
void complete_null_columns(Matrix& u, const std::vector<double>& sigma) {
  const int rows = u.rows();
  const int cols = u.cols();
  for (int hole = 0; hole < cols; ++hole) {
    if (sigma[hole] != 0.0) continue;
    bool filled = false;
    for (int cand = 0; cand < rows && !filled; ++cand) {
      std::vector<double> v(rows, 0.0);
      v[cand] = 1.0;
      // Two Gram-Schmidt passes keep the completed columns orthonormal to
      // working precision even when the candidate starts nearly dependent.
      for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < cols; ++j) {
          if (j == hole) continue;
          if (sigma[j] == 0.0 && j > hole) continue;  // not yet filled
          double dot = 0.0;
          for (int k = 0; k < rows; ++k) dot += v[k] * u(k, j);
          for (int k = 0; k < rows; ++k) v[k] -= dot * u(k, j);
        }
      }
      double norm2 = 0.0;
      for (double x : v) norm2 += x * x;
      if (norm2 > 0.25) {
        const double inv_norm = 1.0 / std::sqrt(norm2);
        for (int k = 0; k < rows; ++k) u(k, hole) = v[k] * inv_norm;
        filled = true;
      }
    }
    if (!filled) {
      throw ConvergenceError("svd: failed to complete orthonormal basis");
    }
  }
}

}  // namespace

SvdFactors svd(const Matrix& m) {
  if (!m.all_finite()) throw InvalidArgumentError("svd: input has non-finite entries");

  // Work on a tall matrix; for wide input factor the transpose and swap sides.
  const bool wide = m.rows() < m.cols();
  Matrix g = wide ? transpose(m) : m;
  const int rows = g.rows();
  const int cols = g.cols();  // cols == min(m.rows, m.cols) after orientation
  Matrix v = Matrix::identity(cols);

  int sweep = 0;
  bool converged = false;
  while (!converged) {
    if (sweep++ >= kMaxSweeps) {
      throw ConvergenceError("svd: no convergence after " + std::to_string(kMaxSweeps) +
                             " sweeps");
    }
    converged = true;
    for (int i = 0; i < cols - 1; ++i) {
      for (int j = i + 1; j < cols; ++j) {
        double dii = 0.0, djj = 0.0, dij = 0.0;
        for (int k = 0; k < rows; ++k) {
          const double gi = g(k, i);
          const double gj = g(k, j);
          dii += gi * gi;
          djj += gj * gj;
          dij += gi * gj;
        }
        if (dii == 0.0 || djj == 0.0) continue;
        if (std::abs(dij) <= kOffDiagTol * std::sqrt(dii * djj)) continue;
        converged = false;
        // Jacobi rotation that annihilates the (i, j) Gram entry.
        const double tau = (djj - dii) / (2.0 * dij);
        const double t =
            (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int k = 0; k < rows; ++k) {
          const double gi = g(k, i);
          const double gj = g(k, j);
          g(k, i) = c * gi - s * gj;
          g(k, j) = s * gi + c * gj;
        }
        for (int k = 0; k < cols; ++k) {
          const double vi = v(k, i);
          const double vj = v(k, j);
          v(k, i) = c * vi - s * vj;
          v(k, j) = s * vi + c * vj;
        }
      }
    }
  }

  std::vector<double> sigma(cols, 0.0);
  for (int j = 0; j < cols; ++j) {
    double norm2 = 0.0;
    for (int k = 0; k < rows; ++k) norm2 += g(k, j) * g(k, j);
    const double norm = std::sqrt(norm2);
    sigma[j] = norm;
    if (norm > 0.0) {
      for (int k = 0; k < rows; ++k) g(k, j) /= norm;
    }
  }

  // Descending order; stable sort keeps original column index order on ties.
  std::vector<int> order(cols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&sigma](int a, int b) { return sigma[a] > sigma[b]; });

  Matrix gs(rows, cols);
  Matrix vs(cols, cols);
  std::vector<double> ss(cols);
  for (int dst = 0; dst < cols; ++dst) {
    const int src = order[dst];
    ss[dst] = sigma[src];
    for (int k = 0; k < rows; ++k) gs(k, dst) = g(k, src);
    for (int k = 0; k < cols; ++k) vs(k, dst) = v(k, src);
  }

  complete_null_columns(gs, ss);

  SvdFactors f;
  if (!wide) {
    f.u = std::move(gs);
    f.sigma = std::move(ss);
    f.vt = transpose(vs);
  } else {
    // m = v * diag(sigma) * gs^T for the transposed problem.
    f.u = std::move(vs);
    f.sigma = std::move(ss);
    f.vt = transpose(gs);
  }

  // Sign convention: first nonzero entry of each left vector is positive.
  const int r = static_cast<int>(f.sigma.size());
  for (int j = 0; j < r; ++j) {
    double lead = 0.0;
    for (int k = 0; k < f.u.rows(); ++k) {
      if (f.u(k, j) != 0.0) {
        lead = f.u(k, j);
        break;
      }
    }
    if (lead < 0.0) {
      for (int k = 0; k < f.u.rows(); ++k) f.u(k, j) = -f.u(k, j);
      for (int k = 0; k < f.vt.cols(); ++k) f.vt(j, k) = -f.vt(j, k);
    }
  }
  return f;
}

Matrix svd_reconstruct(const SvdFactors& f) {
  return svd_partial(f, static_cast<int>(f.sigma.size()));
}

Matrix svd_partial(const SvdFactors& f, int keep) {
  const int r = static_cast<int>(f.sigma.size());
  if (keep < 0 || keep > r) {
    throw InvalidArgumentError("svd_partial: keep " + std::to_string(keep) +
                               " outside [0, " + std::to_string(r) + "]");
  }
  Matrix out(f.u.rows(), f.vt.cols());
  for (int i = 0; i < f.u.rows(); ++i) {
    for (int t = 0; t < keep; ++t) {
      const double w = f.u(i, t) * f.sigma[t];
      if (w == 0.0) continue;
      for (int j = 0; j < f.vt.cols(); ++j) out(i, j) += w * f.vt(t, j);
    }
  }
  return out;
}

}  // namespace corda
