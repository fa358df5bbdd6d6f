#ifndef TRITSMC_TWIST_LEARN_HPP
#define TRITSMC_TWIST_LEARN_HPP

#include "tritsmc/common.hpp"
#include "tritsmc/fk_model.hpp"
#include "tritsmc/trust_region.hpp"
#include "tritsmc/twist.hpp"

#include <iosfwd>
#include <vector>

namespace tritsmc {

/// Learnable twist: the TwistFunction's theta plus an update counter.
struct TwistParams {
  TwistFunction twist;
  int update_count = 0;
};

enum class OptimizerKind { gradient_descent, adaptive };

struct FitConfig {
  double step_size = 0.1;
  /// Kept short: with K particles a fully converged fit overfits the sample.
  int n_steps = 40;
  double gradient_clip_norm = 10.0;
  OptimizerKind optimizer = OptimizerKind::gradient_descent;
  /// Stop once an accepted step lowers the loss by less than this; 0 runs all steps.
  double tolerance = 0.0;
  int max_backtracks = 30;

  void validate() const;
};

struct LossTraceRow {
  int step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double step_size = 0.0;
};

struct FitResult {
  TwistParams params;
  std::vector<LossTraceRow> trace;
};

/// -sum_k w_k log P^{psi(theta)}(xi^k).
double weighted_mle_loss(const TwistParams& params, const std::vector<Trajectory>& trajectories,
                         const VectorXd& tempered_weights, const FkModel& model);

/// Gradient of the weighted MLE loss with respect to theta (same shape).
///
/// With a_t = log psi_t and n_t the weighted occupancy of step t,
///   dL/da_0(x) = -(n_0(x) - W mu^psi(x)),
///   dL/da_t(x) = -(n_t(x) - sum_y n_{t-1}(y) f_t^psi(x | y)),
/// the second terms being the pullbacks through log c_psi and log psi~_{t-1}.
/// Log-linear parameters receive Phi_t^T dL/da_t.
StepVectors loss_gradient(const TwistParams& params, const std::vector<Trajectory>& trajectories,
                          const VectorXd& tempered_weights, const FkModel& model);

/// Euclidean norm over all steps.
double gradient_norm(const StepVectors& grad);

/// Warm-started descent on the weighted MLE loss with clipping and
/// backtracking. Tabular twists are re-pinned to log psi_t(0) = 0 after each
/// step. Throws DivergenceError when the loss turns non-finite or no step
/// within `max_backtracks` halvings decreases it.
FitResult fit_twist(const TwistParams& params_init, const std::vector<Trajectory>& trajectories,
                    const VectorXd& tempered_weights, const FkModel& model, const FitConfig& config);

/// Subtracts log psi_t(0) from every tabular table; no-op for log-linear.
TwistParams pin_gauge(const TwistParams& params);

struct ProjectionBound {
  double lhs = 0.0;    ///< KL(P_{i+1} || pi)
  double rhs = 0.0;    ///< KL(P_i || pi) - Delta + delta_back + M sqrt(2 delta_fwd)
  double gain = 0.0;   ///< Delta = KL(P_i || pi) - KL(q* || pi)
  double delta_forward = 0.0;   ///< KL(q* || P_{i+1})
  double delta_backward = 0.0;  ///< KL(P_{i+1} || q*)
  double M = 0.0;      ///< max |log dq*/dpi|
  bool holds = false;

  [[nodiscard]] double slack() const { return rhs - lhs; }
};

/// Evaluates the projection error bound by enumeration. `q_exact_log` holds
/// log q* over the supported paths in enumeration order.
ProjectionBound projection_error_bound_check(const FkModel& model, const VectorXd& q_exact_log,
                                             const TwistParams& fitted, const TwistParams& prev,
                                             std::uint64_t cap = kDefaultPathCap);

/// Exact KL-constrained path-space update from P^psi: solves the dual with
/// the enumerated proposal as atoms and returns log q* per path.
struct ExactTrustRegionStep {
  PathPair paths;
  TrustRegionResult dual;
  VectorXd log_q;
};

ExactTrustRegionStep exact_trust_region_step(const FkModel& model, const TwistFunction& twist, double epsilon,
                                             std::uint64_t cap = kDefaultPathCap);

/// Tab-separated rows: step, loss, grad_norm, step_size.
void write_loss_trace(std::ostream& os, const std::vector<LossTraceRow>& trace);

}  // namespace tritsmc

#endif  // TRITSMC_TWIST_LEARN_HPP
