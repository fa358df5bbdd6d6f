#include "tritsmc/twist.hpp"

namespace tritsmc {

TwistFunction TwistFunction::tabular(StepVectors log_psi) {
  if (log_psi.size() < 2) throw ShapeError("twist needs tables for steps 0..T with T >= 1");
  for (std::size_t t = 0; t < log_psi.size(); ++t) {
    if (!log_psi[t].allFinite()) {
      throw DomainError("twist log-values at step " + std::to_string(t) + " are not finite");
    }
  }
  TwistFunction tw;
  tw.kind_ = TwistKind::tabular;
  tw.theta_ = log_psi;
  tw.log_psi_ = std::move(log_psi);
  return tw;
}

TwistFunction TwistFunction::log_linear(StepVectors theta, std::vector<MatrixXd> features) {
  if (theta.size() < 2) throw ShapeError("twist needs parameters for steps 0..T with T >= 1");
  if (theta.size() != features.size()) throw ShapeError("log-linear twist: theta/features step count mismatch");
  TwistFunction tw;
  tw.kind_ = TwistKind::log_linear;
  for (std::size_t t = 0; t < theta.size(); ++t) {
    if (features[t].cols() != theta[t].size()) {
      throw ShapeError("log-linear twist: step " + std::to_string(t) + " has " +
                       std::to_string(features[t].cols()) + " features but " +
                       std::to_string(theta[t].size()) + " weights");
    }
    VectorXd values = features[t] * theta[t];
    if (!values.allFinite()) {
      throw DomainError("twist log-values at step " + std::to_string(t) + " are not finite");
    }
    tw.log_psi_.push_back(std::move(values));
  }
  tw.theta_ = std::move(theta);
  tw.features_ = std::move(features);
  return tw;
}

TwistFunction TwistFunction::identity(const FkModel& model) {
  StepVectors zeros;
  for (int t = 0; t <= model.horizon(); ++t) zeros.emplace_back(VectorXd::Zero(model.state_size(t)));
  return tabular(std::move(zeros));
}

TwistFunction TwistFunction::with_theta(StepVectors theta) const {
  if (kind_ == TwistKind::tabular) return tabular(std::move(theta));
  return log_linear(std::move(theta), features_);
}

void TwistFunction::check_compatible(const FkModel& model) const {
  if (horizon() != model.horizon()) {
    throw ShapeError("twist horizon " + std::to_string(horizon()) + " does not match model horizon " +
                     std::to_string(model.horizon()));
  }
  for (int t = 0; t <= model.horizon(); ++t) {
    if (log_psi_table(t).size() != model.state_size(t)) {
      throw ShapeError("twist table at step " + std::to_string(t) + " has " +
                       std::to_string(log_psi_table(t).size()) + " entries, model state space has " +
                       std::to_string(model.state_size(t)));
    }
  }
}

std::vector<MatrixXd> one_hot_features(const FkModel& model) {
  std::vector<MatrixXd> out;
  for (int t = 0; t <= model.horizon(); ++t) out.emplace_back(MatrixXd::Identity(model.state_size(t), model.state_size(t)));
  return out;
}

TwistedModel::TwistedModel(FkModel model, TwistFunction twist)
    : model_(std::move(model)), twist_(std::move(twist)) {
  twist_.check_compatible(model_);
  const int T = model_.horizon();

  log_tilde_psi_.resize(static_cast<std::size_t>(T + 1));
  log_tilde_psi_[static_cast<std::size_t>(T)] = VectorXd::Zero(model_.state_size(T));
  kernels_.resize(static_cast<std::size_t>(T));
  kernel_probs_.resize(static_cast<std::size_t>(T));
  for (int t = T; t >= 1; --t) {
    // Unnormalized log f_t(x'|x) + log psi_t(x'); the row normalizer is log psi~_{t-1}(x).
    MatrixXd k = model_.transition_log_probs(t).rowwise() + twist_.log_psi_table(t).transpose();
    VectorXd tilde(k.rows());
    for (Index x = 0; x < k.rows(); ++x) {
      tilde[x] = log_sum_exp(k.row(x));
      k.row(x).array() -= tilde[x];
    }
    log_tilde_psi_[static_cast<std::size_t>(t - 1)] = std::move(tilde);
    kernel_probs_[static_cast<std::size_t>(t - 1)] = exp_of(k.array()).matrix();
    kernels_[static_cast<std::size_t>(t - 1)] = std::move(k);
  }

  const VectorXd init = model_.initial_log_probs() + twist_.log_psi_table(0);
  log_c_psi_ = log_sum_exp(init);
  initial_ = init.array() - log_c_psi_;
  initial_probs_ = exp_of(initial_.array());
}

FkModel TwistedModel::proposal_model() const {
  return FkModel::with_unit_potentials(initial_, kernels_, model_.alpha());
}

Index TwistedModel::sample_initial(CounterRng& rng) const {
  return static_cast<Index>(sample_categorical(
      {initial_probs_.data(), static_cast<std::size_t>(initial_probs_.size())}, rng.uniform()));
}

Index TwistedModel::sample_transition(int t, Index prev, CounterRng& rng) const {
  const MatrixXd& p = kernel_probs_[static_cast<std::size_t>(t - 1)];
  // Row-major storage: row `prev` is contiguous.
  return static_cast<Index>(
      sample_categorical({p.data() + prev * p.cols(), static_cast<std::size_t>(p.cols())}, rng.uniform()));
}

Trajectory TwistedModel::sample(CounterRng& rng) const {
  const int T = horizon();
  Trajectory traj{std::vector<Index>(static_cast<std::size_t>(T + 1))};
  traj.states[0] = sample_initial(rng);
  for (int t = 1; t <= T; ++t) {
    traj.states[static_cast<std::size_t>(t)] = sample_transition(t, traj.states[static_cast<std::size_t>(t - 1)], rng);
  }
  return traj;
}

TwistedModel build_twisted(const FkModel& model, const TwistFunction& twist) {
  return TwistedModel(model, twist);
}

double twisted_path_log_prob(const TwistedModel& tm, const Trajectory& traj) {
  const FkModel& m = tm.base();
  const TwistFunction& psi = tm.twist();
  m.validate(traj);
  double lp = m.initial_log_probs()[traj[0]] + psi.log_psi(0, traj[0]) - tm.log_c_psi();
  for (int t = 1; t <= m.horizon(); ++t) {
    const auto prev = traj[static_cast<std::size_t>(t - 1)];
    const auto cur = traj[static_cast<std::size_t>(t)];
    lp += m.transition_log_probs(t)(prev, cur) + psi.log_psi(t, cur) - tm.log_tilde_psi(t - 1)[prev];
  }
  return lp;
}

double residual_log_weight(const TwistedModel& tm, const Trajectory& traj) {
  const FkModel& m = tm.base();
  m.validate(traj);
  double lw = tm.log_c_psi();
  for (int t = 0; t <= m.horizon(); ++t) {
    const auto x = traj[static_cast<std::size_t>(t)];
    lw += m.potential_log(t)[x] + tm.log_tilde_psi(t)[x] - tm.twist().log_psi(t, x);
  }
  return lw;
}

VectorXd incremental_log_weights(const TwistedModel& tm, const Trajectory& traj) {
  tm.base().validate(traj);
  VectorXd out(tm.horizon() + 1);
  for (int t = 0; t <= tm.horizon(); ++t) out[t] = incremental_log_weight(tm, t, traj[static_cast<std::size_t>(t)]);
  return out;
}

}  // namespace tritsmc
