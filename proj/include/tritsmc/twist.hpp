#ifndef TRITSMC_TWIST_HPP
#define TRITSMC_TWIST_HPP

#include "tritsmc/common.hpp"
#include "tritsmc/fk_model.hpp"
#include "tritsmc/rng.hpp"

#include <vector>

namespace tritsmc {

enum class TwistKind { tabular, log_linear };

/// Positive twisting functions psi_0..psi_T, held as log-values.
///
/// Tabular twists store log psi_t directly. Log-linear twists store weights
/// theta_t and a feature table Phi_t (S_t x d_t) with log psi_t = Phi_t theta_t.
/// Both expose the same evaluation interface; `theta()` is the learnable
/// parameter vector in either case (for tabular it equals the table).
class TwistFunction {
 public:
  static TwistFunction tabular(StepVectors log_psi);
  static TwistFunction log_linear(StepVectors theta, std::vector<MatrixXd> features);
  /// psi = 1 on every state space of `model`.
  static TwistFunction identity(const FkModel& model);

  [[nodiscard]] TwistKind kind() const { return kind_; }
  [[nodiscard]] int horizon() const { return static_cast<int>(log_psi_.size()) - 1; }
  [[nodiscard]] double log_psi(int t, Index x) const { return log_psi_[static_cast<std::size_t>(t)][x]; }
  [[nodiscard]] const VectorXd& log_psi_table(int t) const { return log_psi_[static_cast<std::size_t>(t)]; }
  [[nodiscard]] const StepVectors& log_psi_tables() const { return log_psi_; }
  [[nodiscard]] const StepVectors& theta() const { return theta_; }
  /// Empty for tabular twists.
  [[nodiscard]] const std::vector<MatrixXd>& features() const { return features_; }

  /// Same family and features, new parameters.
  [[nodiscard]] TwistFunction with_theta(StepVectors theta) const;

  /// Throws ShapeError unless the twist covers every state space of `model`.
  void check_compatible(const FkModel& model) const;

 private:
  TwistFunction() = default;
  TwistKind kind_ = TwistKind::tabular;
  StepVectors theta_;
  std::vector<MatrixXd> features_;
  StepVectors log_psi_;
};

/// Identity feature tables, so a log-linear twist over them is tabular.
std::vector<MatrixXd> one_hot_features(const FkModel& model);

/// Base model together with the twisted initial distribution and kernels
///
///   mu^psi(x)        = psi_0(x) mu(x) / c_psi,
///   f_t^psi(x' | x)  = psi_t(x') f_t(x' | x) / psi~_{t-1}(x),
///
/// where psi~_{t-1}(x) = sum_x' f_t(x' | x) psi_t(x') and psi~_T = 1.
/// Normalizers and twisted kernels are cached at construction.
class TwistedModel {
 public:
  TwistedModel(FkModel model, TwistFunction twist);

  [[nodiscard]] const FkModel& base() const { return model_; }
  [[nodiscard]] const TwistFunction& twist() const { return twist_; }
  [[nodiscard]] int horizon() const { return model_.horizon(); }
  [[nodiscard]] double log_c_psi() const { return log_c_psi_; }
  [[nodiscard]] const VectorXd& log_tilde_psi(int t) const { return log_tilde_psi_[static_cast<std::size_t>(t)]; }
  [[nodiscard]] const VectorXd& twisted_initial_log_probs() const { return initial_; }
  /// log f_t^psi for t = 1..T.
  [[nodiscard]] const MatrixXd& twisted_transition_log_probs(int t) const {
    return kernels_[static_cast<std::size_t>(t - 1)];
  }

  /// The twisted path measure P^psi as a model with unit potentials.
  [[nodiscard]] FkModel proposal_model() const;

  /// One draw from P^psi.
  Trajectory sample(CounterRng& rng) const;
  /// Draws x_0 ~ mu^psi.
  Index sample_initial(CounterRng& rng) const;
  /// Draws x_t ~ f_t^psi(. | prev).
  Index sample_transition(int t, Index prev, CounterRng& rng) const;

 private:
  FkModel model_;
  TwistFunction twist_;
  double log_c_psi_ = 0.0;
  StepVectors log_tilde_psi_;
  VectorXd initial_;
  std::vector<MatrixXd> kernels_;
  VectorXd initial_probs_;
  std::vector<MatrixXd> kernel_probs_;
};

TwistedModel build_twisted(const FkModel& model, const TwistFunction& twist);

/// log P^psi(traj), evaluated through the decomposition
/// log mu + log psi_0 - log c_psi + sum_t [log f_t + log psi_t - log psi~_{t-1}].
double twisted_path_log_prob(const TwistedModel& tm, const Trajectory& traj);

/// log w^psi(traj) = log c_psi + sum_t [log g_t + log psi~_t - log psi_t].
double residual_log_weight(const TwistedModel& tm, const Trajectory& traj);

/// Per-step residual weights log w_t^psi(x_t), t = 0..T; they sum to the
/// residual log-weight.
VectorXd incremental_log_weights(const TwistedModel& tm, const Trajectory& traj);

/// log w_t^psi(x) for a single state; the building block of the SMC loop.
inline double incremental_log_weight(const TwistedModel& tm, int t, Index x) {
  double lw = tm.base().potential_log(t)[x] + tm.log_tilde_psi(t)[x] - tm.twist().log_psi(t, x);
  if (t == 0) lw += tm.log_c_psi();
  return lw;
}

}  // namespace tritsmc

#endif  // TRITSMC_TWIST_HPP
