#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace arcflux {

// Error hierarchy. The CLI maps each family onto a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

class VersionError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::int64_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

template <typename T>
concept Real = std::floating_point<T>;

// Row-major so that one sequence position is one contiguous row.
template <Real T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <Real T>
using Vec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <Real T>
inline T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <Real T>
inline T silu(T x) {
  return x * sigmoid(x);
}

template <Real T>
inline T silu_grad(T x) {
  const T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

// log(1 + e^x) without overflow for large x.
template <Real T>
inline T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Vectorized elementwise forms over whole matrices. exp(-x) may overflow to
// inf for very negative x, which still yields the correct limit of 0.
template <typename M>
void silu_into(const M& x, M& y) {
  using T = typename M::Scalar;
  y.resize(x.rows(), x.cols());
  y.array() = x.array() * (T(1) + (-x.array()).exp()).inverse();
}

template <typename M>
void silu_grad_into(const M& x, M& y) {
  using T = typename M::Scalar;
  y.resize(x.rows(), x.cols());
  y.array() = (T(1) + (-x.array()).exp()).inverse();
  y.array() = y.array() * (T(1) + x.array() * (T(1) - y.array()));
}

inline void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace arcflux
