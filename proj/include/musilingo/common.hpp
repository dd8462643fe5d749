// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared numeric aliases, error types, hashing and a portable RNG.

#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace musilingo {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

// Error hierarchy. The CLI maps each family onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or invariant-violating input data (files, records, shapes).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration or usage (unknown key, out-of-range value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Failure while running (non-finite loss, unavailable backend, I/O).
class RuntimeError : public Error {
 public:
  using Error::Error;
};

inline void require_shape(bool ok, std::string_view what) {
  if (!ok) throw DataError(std::string("shape mismatch: ") + std::string(what));
}

// 64-bit FNV-1a. Used for parameter digests and config fingerprints.
class Digest {
 public:
  Digest& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Digest& u64(std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    return bytes(buf, 8);
  }
  Digest& f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }
  Digest& str(std::string_view s) {
    u64(s.size());
    return bytes(s.data(), s.size());
  }
  template <typename Derived>
  Digest& matrix(const Eigen::DenseBase<Derived>& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    return *this;
  }
  std::uint64_t value() const { return state_; }
  std::string hex() const { return to_hex(state_); }

  static std::string to_hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

// Mersenne twister with hand-rolled distributions so that streams are
// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Unbiased integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index on empty range");
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev) {
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal() * stddev;
    return m;
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a base seed with a stream label so that sub-components draw
/// from independent streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return Digest{}.u64(seed).str(label).value();
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

}  // namespace musilingo
