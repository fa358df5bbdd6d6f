#ifndef TRITSMC_OPTIMAL_TWIST_HPP
#define TRITSMC_OPTIMAL_TWIST_HPP

#include "tritsmc/common.hpp"
#include "tritsmc/fk_model.hpp"
#include "tritsmc/twist.hpp"

#include <cstdint>

namespace tritsmc {

/// psi*_T = g_T, psi*_t = g_t * E[psi*_{t+1} | x_t]; soft values V*_t = alpha log psi*_t.
struct OptimalTwistResult {
  TwistFunction psi_star;
  StepVectors soft_values;
  double log_Z_from_recursion = 0.0;
};

OptimalTwistResult backward_recursion(const FkModel& model);

/// Sup-norm violation of the soft Bellman backup
///   V_t(x) = alpha log g_t(x) + alpha log sum_x' f_{t+1}(x'|x) exp(V_{t+1}(x')/alpha)
/// over t < T, together with the terminal condition V_T = alpha log g_T.
double soft_bellman_residual(const FkModel& model, const StepVectors& values, double alpha);

struct ZeroVarianceReport {
  double max_abs_dev_from_logZ = 0.0;
  /// Mean and variance of the (linear-space) residual weights.
  double mean = 0.0;
  double variance = 0.0;
  double log_Z = 0.0;
  std::size_t n_samples = 0;
};

/// Samples n trajectories from P^psi and summarizes their residual weights
/// against the exact log Z.
ZeroVarianceReport zero_variance_check(const FkModel& model, const TwistFunction& twist,
                                       std::size_t n_samples, std::uint64_t seed);

}  // namespace tritsmc

#endif  // TRITSMC_OPTIMAL_TWIST_HPP
