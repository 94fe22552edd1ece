// clvc/common.hpp

// Copyright 2026  The clvc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef CLVC_COMMON_HPP_
#define CLVC_COMMON_HPP_

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace clvc {

// All numeric work is done in 64-bit; parameters are persisted as 32-bit.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension or shape contract violated.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed or unsupported file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A stage or operation was invoked without what it needs.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A loss or intermediate went NaN/inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

// Portable draws: the std:: distributions are implementation-defined, so
// build everything from the raw 64-bit engine output.
inline double Uniform01(Rng &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double UniformRange(Rng &rng, double lo, double hi) {
  return lo + (hi - lo) * Uniform01(rng);
}

inline double StandardNormal(Rng &rng) {
  double u1 = Uniform01(rng);
  while (u1 <= 0.0) u1 = Uniform01(rng);
  double u2 = Uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline std::uint64_t UniformIndex(Rng &rng, std::uint64_t n) {
  return static_cast<std::uint64_t>(Uniform01(rng) * static_cast<double>(n)) % n;
}

// SplitMix64 finalizer; derives independent stream seeds from (seed, index).
inline std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Round every entry to the nearest float; parameters live on this grid.
inline void RoundToFloat(Matrix *m) {
  for (Eigen::Index i = 0; i < m->size(); ++i)
    m->data()[i] = static_cast<double>(static_cast<float>(m->data()[i]));
}

}  // namespace clvc

#endif  // CLVC_COMMON_HPP_
