// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace corda {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatch or non-positive dimension.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Rejected argument value (non-finite entry, out-of-range rank, bad config).
class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

// Inversion of a singular or unacceptably ill-conditioned matrix.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

// Iterative routine exhausted its sweep budget without meeting tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Damping search exhausted its doubling budget.
class DampingError : public Error {
 public:
  using Error::Error;
};

// Training loss became non-finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// File or stream failure, bad magic, or truncated payload.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace corda
