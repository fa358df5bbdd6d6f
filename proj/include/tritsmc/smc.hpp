#ifndef TRITSMC_SMC_HPP
#define TRITSMC_SMC_HPP

#include "tritsmc/common.hpp"
#include "tritsmc/fk_model.hpp"
#include "tritsmc/rng.hpp"
#include "tritsmc/twist.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace tritsmc {

struct SmcOptions {
  std::size_t num_particles = 16;
  /// Steps in [0, T-1] after whose weighting the particles are resampled.
  std::vector<int> schedule;
  std::uint64_t seed = 0;
  /// Extra stream id (the outer iteration in TRI-TSMC) so that repeated runs
  /// under one seed draw from disjoint substreams.
  std::uint64_t stream = 0;
  /// Worker threads for propagation; results do not depend on this.
  unsigned threads = 1;
};

/// Steps {interval, 2 interval, ...} strictly below `horizon`.
std::vector<int> interval_schedule(int horizon, int interval);

/// Sorts, deduplicates and range-checks a schedule against horizon T.
std::vector<int> normalize_schedule(std::vector<int> schedule, int horizon);

struct SmcOutput {
  std::vector<Trajectory> trajectories;
  /// Full-path residual log-weights log w^psi(X^(k)) recomputed on the final
  /// ancestral paths.
  VectorXd residual_log_weights;
  /// Incremental log-weights accumulated since the last resampling; these
  /// carry the importance correction of the particle approximation.
  VectorXd final_block_log_weights;
  double log_Z_estimate = 0.0;
  /// ESS at each resampling stage followed by the final stage.
  std::vector<double> ess;
  /// Step index of each ESS entry; the final stage is reported as T.
  std::vector<int> ess_steps;
  std::vector<int> schedule;
  std::uint64_t seed = 0;
  /// Initial draws plus transition draws; K (T + 1) for a full run.
  std::uint64_t states_sampled = 0;

  [[nodiscard]] std::size_t size() const { return trajectories.size(); }
  /// Normalized final-block weights.
  [[nodiscard]] VectorXd normalized_weights() const { return normalize_log_weights(final_block_log_weights); }
  /// Self-normalized estimate sum_k W_k h(X_T^(k)).
  [[nodiscard]] double weighted_terminal_mean(const VectorXd& h) const;
};

/// Twisted SMC: X_0 ~ mu^psi, incremental residual weights w_t^psi, multinomial
/// resampling at the scheduled steps, propagation under f_{t+1}^psi.
SmcOutput run_twisted_smc(const TwistedModel& tm, const SmcOptions& options);
SmcOutput run_twisted_smc(const FkModel& model, const TwistFunction& twist, const SmcOptions& options);

/// K i.i.d. categorical ancestors; weights must be normalized.
std::vector<std::size_t> multinomial_resample(std::span<const double> normalized_weights, CounterRng& rng);
std::vector<std::size_t> multinomial_resample(const VectorXd& normalized_weights, CounterRng& rng);

/// 1 / sum_k w_k^2 of normalized weights.
double ess(const VectorXd& normalized_weights);

struct BestOfN {
  Trajectory trajectory;
  std::size_t index = 0;
  double terminal_log_potential = 0.0;
};

/// Draws K base paths and keeps the one with the largest g_T(x_T); ties go to
/// the lowest index.
BestOfN best_of_n(const FkModel& model, std::size_t num_samples, std::uint64_t seed);

enum class PotentialVariant { diff, max };

/// Untwisted SMC whose resampling stages use intermediate potentials built
/// from reward estimates r_t (one vector per step, over that step's states):
///   diff: log G = lambda (r_t - r_prev),   max: log G = lambda max(r_t, r_prev)
/// where r_prev is the estimate at the particle's previous resampling stage
/// (absent at the first stage, where log G = lambda r_t). The final block
/// divides the applied G out again so the particle system targets the
/// model's own Feynman-Kac measure.
SmcOutput potential_smc_baseline(const FkModel& model, const StepVectors& intermediate_rewards,
                                 PotentialVariant variant, double lambda_scale, const SmcOptions& options);

/// Line-oriented table: '#' header lines (log_Z_estimate, ESS, seed, schedule)
/// then one row per particle: index, states..., residual log-weight,
/// final-block log-weight.
void write_smc_table(std::ostream& os, const SmcOutput& out);

}  // namespace tritsmc

#endif  // TRITSMC_SMC_HPP
