// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <cmath>
#include <utility>
#include <vector>

#include "corda/matrix.hpp"
#include "corda/svd.hpp"
#include "support/oracles.hpp"

using corda::Matrix;
using corda::SvdFactors;

namespace {

double orthonormality_defect(const Matrix& u) {
  const Matrix gram = multiply(corda::transpose(u), u);
  return corda::frobenius_distance(gram, Matrix::identity(u.cols()));
}

void check_factor_contract(const Matrix& m, const SvdFactors& f) {
  const int big_r = std::min(m.rows(), m.cols());
  REQUIRE(static_cast<int>(f.sigma.size()) == big_r);
  REQUIRE(f.u.rows() == m.rows());
  REQUIRE(f.u.cols() == big_r);
  REQUIRE(f.vt.rows() == big_r);
  REQUIRE(f.vt.cols() == m.cols());

  CHECK(orthonormality_defect(f.u) <= 1e-10);
  CHECK(orthonormality_defect(corda::transpose(f.vt)) <= 1e-10);

  for (int i = 0; i + 1 < big_r; ++i) CHECK(f.sigma[i] >= f.sigma[i + 1]);
  for (double s : f.sigma) CHECK(s >= 0.0);

  const Matrix recon = corda::svd_reconstruct(f);
  CHECK(corda::frobenius_distance(recon, m) <= 1e-9 * (1.0 + oracle::frob(m)));
}

}  // namespace

TEST_CASE("svd of a diagonal matrix sorts the singular values") {
  Matrix d(3, 3);
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  d(2, 2) = 2.0;
  const SvdFactors f = corda::svd(d);
  CHECK(f.sigma[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(f.sigma[1] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(f.sigma[2] == doctest::Approx(1.0).epsilon(1e-14));
  check_factor_contract(d, f);
  // The factors are signed permutations; the sign rule makes them plain
  // permutations here.
  CHECK(f.u(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f.u(2, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f.u(1, 2) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("svd satisfies the factor contract on random shapes") {
  int seed = 1000;
  const std::vector<std::pair<int, int>> shapes = {{8, 8},   {12, 5}, {5, 12}, {1, 7},
                                                   {7, 1},   {32, 24}, {24, 32}};
  for (const auto& [r, c] : shapes) {
    const Matrix m = oracle::random_matrix(r, c, ++seed);
    check_factor_contract(m, corda::svd(m));
  }
}

TEST_CASE("singular values match the symmetric eigenvalue oracle") {
  int seed = 2000;
  const std::vector<std::pair<int, int>> shapes = {{10, 10}, {16, 9}, {9, 16}, {20, 20}};
  for (const auto& [r, c] : shapes) {
    const Matrix m = oracle::random_matrix(r, c, ++seed);
    const SvdFactors f = corda::svd(m);
    // Eigenvalues of the smaller Gram matrix equal the squared sigmas.
    const Matrix gram = r <= c ? oracle::matmul(m, corda::transpose(m))
                               : oracle::matmul(corda::transpose(m), m);
    const std::vector<double> eig = oracle::sym_eigenvalues(gram);
    const double scale = std::max(1.0, f.sigma[0]);
    for (std::size_t i = 0; i < f.sigma.size(); ++i) {
      const double want = std::sqrt(std::max(0.0, eig[i]));
      CHECK(std::abs(f.sigma[i] - want) <= 1e-9 * scale);
    }
  }
}

TEST_CASE("rank-deficient input yields zero sigmas and a completed basis") {
  // Two identical columns plus a zero column: rank 1 out of 3.
  Matrix m(4, 3);
  for (int i = 0; i < 4; ++i) {
    m(i, 0) = i + 1.0;
    m(i, 1) = i + 1.0;
  }
  const SvdFactors f = corda::svd(m);
  CHECK(f.sigma[0] > 0.0);
  CHECK(f.sigma[1] <= 1e-12 * f.sigma[0]);
  CHECK(f.sigma[2] <= 1e-12 * f.sigma[0]);
  check_factor_contract(m, f);
}

TEST_CASE("svd of the zero matrix") {
  const Matrix z(3, 5);
  const SvdFactors f = corda::svd(z);
  for (double s : f.sigma) CHECK(s == 0.0);
  check_factor_contract(z, f);
}

TEST_CASE("sign convention and determinism") {
  const Matrix m = oracle::random_matrix(9, 6, 77);
  const SvdFactors f1 = corda::svd(m);
  for (int j = 0; j < f1.u.cols(); ++j) {
    double lead = 0.0;
    for (int i = 0; i < f1.u.rows(); ++i) {
      if (f1.u(i, j) != 0.0) {
        lead = f1.u(i, j);
        break;
      }
    }
    CHECK(lead > 0.0);
  }
  // Identical input bytes give identical factor bytes.
  const SvdFactors f2 = corda::svd(m);
  CHECK(f1.u.storage() == f2.u.storage());
  CHECK(f1.sigma == f2.sigma);
  CHECK(f1.vt.storage() == f2.vt.storage());
}

TEST_CASE("transposing the input swaps the factor sides") {
  const Matrix m = oracle::random_matrix(5, 11, 31);
  const SvdFactors f = corda::svd(m);
  const SvdFactors ft = corda::svd(corda::transpose(m));
  REQUIRE(f.sigma.size() == ft.sigma.size());
  for (std::size_t i = 0; i < f.sigma.size(); ++i) {
    CHECK(f.sigma[i] == doctest::Approx(ft.sigma[i]).epsilon(1e-13));
  }
}

TEST_CASE("partial sums obey the plain truncation error identity") {
  const Matrix m = oracle::random_matrix(10, 14, 55);
  const SvdFactors f = corda::svd(m);
  const int big_r = static_cast<int>(f.sigma.size());
  for (int keep = 0; keep <= big_r; ++keep) {
    const Matrix approx = corda::svd_partial(f, keep);
    double tail = 0.0;
    for (int i = keep; i < big_r; ++i) tail += f.sigma[i] * f.sigma[i];
    const double err = corda::frobenius_distance(m, approx);
    CHECK(std::abs(err - std::sqrt(tail)) <= 1e-9 * (1.0 + f.sigma[0]));
  }
  CHECK_THROWS_AS(corda::svd_partial(f, big_r + 1), corda::InvalidArgumentError);
  CHECK_THROWS_AS(corda::svd_partial(f, -1), corda::InvalidArgumentError);
}

TEST_CASE("svd rejects non-finite input") {
  Matrix m(2, 2, {1.0, 2.0, 3.0, std::nan("")});
  CHECK_THROWS_AS(corda::svd(m), corda::InvalidArgumentError);
}
