// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "corda/decompose.hpp"
#include "support/oracles.hpp"

using corda::ContextFactors;
using corda::CovarianceStat;
using corda::Matrix;

namespace {

CovarianceStat spd_stat(int d, std::uint64_t seed, double floor = 0.5) {
  CovarianceStat stat = corda::make_stat(d);
  stat.c = oracle::random_spd(d, seed, floor);
  stat.columns_seen = static_cast<std::uint64_t>(4 * d);
  return stat;
}

void check_reconstruction(const ContextFactors& f, const Matrix& w, double tol = 1e-8) {
  const Matrix full = corda::truncate_reconstruct(f, corda::factor_rank(f));
  CHECK(corda::frobenius_distance(full, w) <= tol * (1.0 + oracle::frob(w)));
  for (int i = 0; i + 1 < corda::factor_rank(f); ++i) CHECK(f.sigma[i] >= f.sigma[i + 1]);
}

}  // namespace

TEST_CASE("plain factors reconstruct the weight") {
  const Matrix w = oracle::random_matrix(9, 6, 11);
  const ContextFactors f = corda::plain_factors(w);
  CHECK(f.method == corda::DecomposeMethod::plain);
  CHECK(f.source_context == "none");
  CHECK(corda::factor_rank(f) == 6);
  check_reconstruction(f, w);
}

TEST_CASE("activation-scaled factors reconstruct and reduce to plain for uniform scales") {
  const Matrix w = oracle::random_matrix(7, 10, 21);

  std::vector<double> varied(10);
  for (int j = 0; j < 10; ++j) varied[j] = 0.2 + 0.3 * j;
  const ContextFactors f = corda::asvd_factors(w, varied);
  CHECK(f.method == corda::DecomposeMethod::asvd);
  check_reconstruction(f, w);

  // Constant scales cancel: every partial sum matches the plain ranking.
  const std::vector<double> uniform(10, 3.7);
  const ContextFactors fu = corda::asvd_factors(w, uniform);
  const ContextFactors fp = corda::plain_factors(w);
  for (int keep = 0; keep <= corda::factor_rank(fp); ++keep) {
    CHECK(corda::frobenius_distance(corda::truncate_reconstruct(fu, keep),
                                    corda::truncate_reconstruct(fp, keep)) <=
          1e-9 * (1.0 + oracle::frob(w)));
  }

  // All-zero scales hit the floor and still reconstruct.
  const std::vector<double> zeros(10, 0.0);
  check_reconstruction(corda::asvd_factors(w, zeros), w);
}

TEST_CASE("activation scales reorder which component ranks first") {
  // w has a dominant first column; a large scale on the second input channel
  // must promote the second component.
  Matrix w(2, 2);
  w(0, 0) = 1.0;
  w(1, 1) = 0.5;
  const ContextFactors plain = corda::plain_factors(w);
  CHECK(plain.u(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  const ContextFactors scaled = corda::asvd_factors(w, {0.1, 10.0});
  CHECK(std::abs(scaled.u(1, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(scaled.sigma[0] == doctest::Approx(5.0).epsilon(1e-12));   // 0.5 * 10
  CHECK(scaled.sigma[1] == doctest::Approx(0.1).epsilon(1e-12));   // 1.0 * 0.1
}

TEST_CASE("covariance-weighted factors reconstruct the weight") {
  const Matrix w = oracle::random_matrix(6, 8, 31);
  const CovarianceStat stat = spd_stat(8, 32);
  const ContextFactors f = corda::co_svd_factors(w, stat);
  CHECK(f.method == corda::DecomposeMethod::co_svd);
  check_reconstruction(f, w);
}

TEST_CASE("weighted truncation error equals the sigma tail") {
  int seed = 400;
  for (int trial = 0; trial < 5; ++trial) {
    const int d_out = 4 + 3 * trial;
    const int d_in = 6 + 2 * trial;
    const Matrix w = oracle::random_matrix(d_out, d_in, ++seed);
    CovarianceStat stat = spd_stat(d_in, ++seed);
    const ContextFactors f = corda::co_svd_factors(w, stat);
    const double scale = 1.0 + oracle::frob(oracle::matmul(w, stat.c));
    double prev = std::numeric_limits<double>::infinity();
    for (int keep = 0; keep <= corda::factor_rank(f); ++keep) {
      const Matrix diff = w - corda::truncate_reconstruct(f, keep);
      const double lhs = oracle::frob(oracle::matmul(diff, stat.c));
      double tail = 0.0;
      for (int i = keep; i < corda::factor_rank(f); ++i) tail += f.sigma[i] * f.sigma[i];
      CHECK(std::abs(lhs - std::sqrt(tail)) <= 1e-8 * scale);
      // More kept components never hurt the weighted residual.
      CHECK(lhs <= prev + 1e-8 * scale);
      prev = lhs;
    }
  }
}

TEST_CASE("scaling the covariance by a constant leaves the splits unchanged") {
  const Matrix w = oracle::random_matrix(8, 8, 51);
  const CovarianceStat stat = spd_stat(8, 52);
  const ContextFactors base = corda::co_svd_factors(w, stat);
  for (const double k : {0.01, 100.0}) {
    CovarianceStat scaled = stat;
    scaled.c = k * stat.c;
    const ContextFactors f = corda::co_svd_factors(w, scaled);
    for (std::size_t i = 0; i < base.sigma.size(); ++i) {
      CHECK(f.sigma[i] == doctest::Approx(k * base.sigma[i]).epsilon(1e-9));
    }
    for (int keep = 0; keep <= corda::factor_rank(base); ++keep) {
      CHECK(corda::frobenius_distance(corda::truncate_reconstruct(f, keep),
                                      corda::truncate_reconstruct(base, keep)) <=
            1e-9 * (1.0 + oracle::frob(w)));
    }
  }
}

TEST_CASE("identity covariance reproduces the plain factorization") {
  const Matrix w = oracle::random_matrix(5, 7, 61);
  CovarianceStat stat = corda::make_stat(7);
  stat.c = Matrix::identity(7);
  stat.columns_seen = 7;
  const ContextFactors f = corda::co_svd_factors(w, stat);
  const ContextFactors p = corda::plain_factors(w);
  for (std::size_t i = 0; i < f.sigma.size(); ++i) {
    CHECK(f.sigma[i] == doctest::Approx(p.sigma[i]).epsilon(1e-12));
  }
  CHECK(corda::frobenius_distance(f.vhat_t, p.vhat_t) <= 1e-12);
}

TEST_CASE("zero covariance degrades to the plain ranking after flooring") {
  const Matrix w = oracle::random_matrix(6, 6, 71);
  const CovarianceStat stat = corda::make_stat(6);  // all zeros, never touched
  const ContextFactors f = corda::co_svd_factors(w, stat);
  const ContextFactors p = corda::plain_factors(w);
  for (int keep = 0; keep <= 6; ++keep) {
    CHECK(corda::frobenius_distance(corda::truncate_reconstruct(f, keep),
                                    corda::truncate_reconstruct(p, keep)) <=
          1e-9 * (1.0 + oracle::frob(w)));
  }
}

TEST_CASE("decompose validates its inputs") {
  const Matrix w = oracle::random_matrix(4, 5, 81);
  CHECK_THROWS_AS(corda::asvd_factors(w, std::vector<double>(4, 1.0)),
                  corda::DimensionError);
  CHECK_THROWS_AS(corda::asvd_factors(w, std::vector<double>{1, 1, 1, 1, -0.5}),
                  corda::InvalidArgumentError);
  CHECK_THROWS_AS(corda::co_svd_factors(w, spd_stat(4, 82)), corda::DimensionError);

  const ContextFactors f = corda::plain_factors(w);
  CHECK_THROWS_AS(corda::truncate_reconstruct(f, 5), corda::InvalidArgumentError);
  CHECK_THROWS_AS(corda::truncate_reconstruct(f, -1), corda::InvalidArgumentError);

  CHECK(corda::decompose_method_from_string("co_svd") == corda::DecomposeMethod::co_svd);
  CHECK_THROWS_AS(corda::decompose_method_from_string("hybrid"),
                  corda::InvalidArgumentError);
  CHECK(std::string(corda::to_string(corda::DecomposeMethod::asvd)) == "asvd");
}
