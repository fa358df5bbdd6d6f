#ifndef TRITSMC_COMMON_HPP
#define TRITSMC_COMMON_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace tritsmc {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

/// One vector per time step, indexed 0..T.
using StepVectors = std::vector<VectorXd>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Error taxonomy. Everything derives from tritsmc::Error so callers can
// catch the family in one place (the CLI maps them onto exit codes).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidTrajectoryError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class DegeneracyError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Elementwise exp with exp(-inf) = 0 exactly. Eigen's vectorized exp clamps
/// its argument and maps -inf to a tiny denormal, which would give forbidden
/// states a nonzero mass.
template <typename Derived>
auto exp_of(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.derived().unaryExpr([](Scalar v) { return std::exp(v); });
}

/// Max-shifted log(sum(exp(x))). Returns -inf for an empty or all -inf input.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log(exp_of(x.derived().array() - m).sum());
}

/// log of the arithmetic mean of exp(x).
template <typename Derived>
typename Derived::Scalar log_mean_exp(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return log_sum_exp(x) - std::log(static_cast<Scalar>(x.size()));
}

/// exp(x - logsumexp(x)); a softmax over log-masses.
template <typename Derived>
Vector<typename Derived::Scalar> normalize_log_weights(const Eigen::DenseBase<Derived>& x) {
  const auto lse = log_sum_exp(x);
  return exp_of(x.derived().array() - lse).matrix();
}

}  // namespace tritsmc

#endif  // TRITSMC_COMMON_HPP
