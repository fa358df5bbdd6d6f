#ifndef TRITSMC_FK_MODEL_HPP
#define TRITSMC_FK_MODEL_HPP

#include "tritsmc/common.hpp"
#include "tritsmc/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace tritsmc {

/// A path x_0..x_T; states[t] indexes the finite state space of step t.
struct Trajectory {
  std::vector<Index> states;

  [[nodiscard]] std::size_t size() const { return states.size(); }
  Index operator[](std::size_t t) const { return states[t]; }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
  friend auto operator<=>(const Trajectory&, const Trajectory&) = default;
};

/// Finite-horizon Feynman-Kac model over per-step finite state spaces.
///
/// The base path measure is P(x) = mu(x_0) prod_t f_t(x_t | x_{t-1}); the
/// unnormalized target is gamma(x) = P(x) prod_t g_t(x_t). Everything is held
/// in log space. Transition t (1..T) is an S_{t-1} x S_t matrix whose rows
/// are normalized; impossible transitions are -inf. Potentials must be finite.
///
/// Instances are immutable after construction.
class FkModel {
 public:
  static constexpr double kNormTolerance = 1e-12;

  FkModel(VectorXd initial_log_probs, std::vector<MatrixXd> transition_log_probs,
          StepVectors potential_log, double alpha = 1.0);

  /// Model with g_t = 1 everywhere.
  static FkModel with_unit_potentials(VectorXd initial_log_probs,
                                      std::vector<MatrixXd> transition_log_probs,
                                      double alpha = 1.0);

  [[nodiscard]] int horizon() const { return static_cast<int>(transitions_.size()); }
  [[nodiscard]] Index state_size(int t) const { return potentials_[static_cast<std::size_t>(t)].size(); }
  [[nodiscard]] std::vector<Index> state_sizes() const;
  [[nodiscard]] const VectorXd& initial_log_probs() const { return initial_; }
  /// log f_t for t = 1..T.
  [[nodiscard]] const MatrixXd& transition_log_probs(int t) const {
    return transitions_[static_cast<std::size_t>(t - 1)];
  }
  [[nodiscard]] const std::vector<MatrixXd>& transitions() const { return transitions_; }
  [[nodiscard]] const VectorXd& potential_log(int t) const { return potentials_[static_cast<std::size_t>(t)]; }
  [[nodiscard]] const StepVectors& potentials() const { return potentials_; }
  [[nodiscard]] double alpha() const { return alpha_; }

  /// Same base dynamics, new potentials.
  [[nodiscard]] FkModel with_potentials(StepVectors potential_log) const;

  /// Product of the state-space sizes, saturating at UINT64_MAX.
  [[nodiscard]] std::uint64_t path_count_bound() const;

  /// Throws InvalidTrajectoryError when traj has the wrong length or an
  /// out-of-range index.
  void validate(const Trajectory& traj) const;

 private:
  VectorXd initial_;
  std::vector<MatrixXd> transitions_;
  StepVectors potentials_;
  double alpha_;
};

/// Replaces the potentials of `base` by g_t = 1 (t < T), g_T = exp(reward / alpha).
FkModel from_terminal_reward(const FkModel& base, const VectorXd& reward, double alpha);

/// log mu(x_0) + sum_t log f_t(x_t | x_{t-1}).
double base_path_log_prob(const FkModel& model, const Trajectory& traj);

/// sum_t log g_t(x_t).
double potential_path_log(const FkModel& model, const Trajectory& traj);

/// Unnormalized target log gamma(x).
inline double target_unnormalized_log(const FkModel& model, const Trajectory& traj) {
  return base_path_log_prob(model, traj) + potential_path_log(model, traj);
}

/// log Z by the backward dynamic program; O(T max S^2).
double exact_log_Z(const FkModel& model);

inline constexpr std::uint64_t kDefaultPathCap = 1'000'000;

/// Visits every path with positive base probability in lexicographic order,
/// passing the path and its base log-probability. Throws CapacityError as soon
/// as more than `cap` supported paths exist.
void for_each_supported_path(const FkModel& model, std::uint64_t cap,
                             const std::function<void(const Trajectory&, double)>& visit);

/// All supported paths with base log-probabilities.
struct PathTable {
  std::vector<Trajectory> paths;
  VectorXd base_log_probs;
};

PathTable enumerate_paths(const FkModel& model, std::uint64_t cap = kDefaultPathCap);

/// Exact target over the supported paths.
struct ExactOracle {
  double log_Z = 0.0;
  std::vector<Trajectory> paths;
  VectorXd target_log_probs;

  /// log pi(traj), or -inf for a path outside the support.
  [[nodiscard]] double log_prob(const Trajectory& traj) const;
};

ExactOracle enumerate_target(const FkModel& model, std::uint64_t cap = kDefaultPathCap);

/// One draw from the base path measure.
Trajectory sample_base_path(const FkModel& model, CounterRng& rng);

}  // namespace tritsmc

#endif  // TRITSMC_FK_MODEL_HPP
