#include "tritsmc/twist_learn.hpp"

#include <algorithm>
#include <ostream>

namespace tritsmc {

namespace {

void check_batch(const std::vector<Trajectory>& trajectories, const VectorXd& weights, const FkModel& model) {
  if (static_cast<Index>(trajectories.size()) != weights.size()) {
    throw ShapeError("weighted MLE: " + std::to_string(trajectories.size()) + " trajectories but " +
                     std::to_string(weights.size()) + " weights");
  }
  for (const auto& traj : trajectories) model.validate(traj);
}

StepVectors add_scaled(const StepVectors& x, double s, const StepVectors& d) {
  StepVectors out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) out[t] = x[t] + s * d[t];
  return out;
}

}  // namespace

void FitConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("fit: step_size must be positive");
  if (n_steps < 1) throw ConfigError("fit: n_steps must be at least 1");
  if (!(gradient_clip_norm > 0.0)) throw ConfigError("fit: gradient_clip_norm must be positive");
  if (tolerance < 0.0) throw ConfigError("fit: tolerance must be nonnegative");
  if (max_backtracks < 0) throw ConfigError("fit: max_backtracks must be nonnegative");
}

double weighted_mle_loss(const TwistParams& params, const std::vector<Trajectory>& trajectories,
                         const VectorXd& tempered_weights, const FkModel& model) {
  check_batch(trajectories, tempered_weights, model);
  const TwistedModel tm(model, params.twist);
  double loss = 0.0;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const double w = tempered_weights[static_cast<Index>(k)];
    if (w == 0.0) continue;
    loss -= w * twisted_path_log_prob(tm, trajectories[k]);
  }
  return loss;
}

StepVectors loss_gradient(const TwistParams& params, const std::vector<Trajectory>& trajectories,
                          const VectorXd& tempered_weights, const FkModel& model) {
  check_batch(trajectories, tempered_weights, model);
  const TwistedModel tm(model, params.twist);
  const int T = model.horizon();

  StepVectors occupancy;
  for (int t = 0; t <= T; ++t) occupancy.emplace_back(VectorXd::Zero(model.state_size(t)));
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const double w = tempered_weights[static_cast<Index>(k)];
    for (int t = 0; t <= T; ++t) occupancy[static_cast<std::size_t>(t)][trajectories[k][static_cast<std::size_t>(t)]] += w;
  }

  StepVectors grad(static_cast<std::size_t>(T + 1));
  const double total = tempered_weights.sum();
  grad[0] = total * exp_of(tm.twisted_initial_log_probs().array()).matrix() - occupancy[0];
  for (int t = 1; t <= T; ++t) {
    const MatrixXd kernel = exp_of(tm.twisted_transition_log_probs(t).array());
    grad[static_cast<std::size_t>(t)] =
        kernel.transpose() * occupancy[static_cast<std::size_t>(t - 1)] - occupancy[static_cast<std::size_t>(t)];
  }

  if (params.twist.kind() == TwistKind::log_linear) {
    for (int t = 0; t <= T; ++t) {
      grad[static_cast<std::size_t>(t)] =
          params.twist.features()[static_cast<std::size_t>(t)].transpose() * grad[static_cast<std::size_t>(t)];
    }
  }
  return grad;
}

double gradient_norm(const StepVectors& grad) {
  double sq = 0.0;
  for (const auto& g : grad) sq += g.squaredNorm();
  return std::sqrt(sq);
}

TwistParams pin_gauge(const TwistParams& params) {
  if (params.twist.kind() != TwistKind::tabular) return params;
  StepVectors theta = params.twist.theta();
  for (auto& v : theta) v.array() -= v[0];
  return {params.twist.with_theta(std::move(theta)), params.update_count};
}

FitResult fit_twist(const TwistParams& params_init, const std::vector<Trajectory>& trajectories,
                    const VectorXd& tempered_weights, const FkModel& model, const FitConfig& config) {
  config.validate();
  params_init.twist.check_compatible(model);

  FitResult result{pin_gauge(params_init), {}};
  TwistParams& params = result.params;
  auto loss_of = [&](const TwistParams& p) { return weighted_mle_loss(p, trajectories, tempered_weights, model); };

  double loss = loss_of(params);
  if (!std::isfinite(loss)) throw DivergenceError("fit_twist: non-finite loss at step 0");

  StepVectors second_moment;
  for (const auto& th : params.twist.theta()) second_moment.emplace_back(VectorXd::Zero(th.size()));
  constexpr double kDecay = 0.9;
  constexpr double kAdaptiveEps = 1e-8;

  for (int step = 1; step <= config.n_steps; ++step) {
    StepVectors grad = loss_gradient(params, trajectories, tempered_weights, model);
    const double gnorm = gradient_norm(grad);
    if (!std::isfinite(gnorm)) {
      throw DivergenceError("fit_twist: non-finite gradient at step " + std::to_string(step));
    }
    if (step == 1) result.trace.push_back({0, loss, gnorm, 0.0});
    if (gnorm == 0.0) break;
    if (gnorm > config.gradient_clip_norm) {
      for (auto& g : grad) g *= config.gradient_clip_norm / gnorm;
    }

    StepVectors direction(grad.size());
    for (std::size_t t = 0; t < grad.size(); ++t) {
      if (config.optimizer == OptimizerKind::adaptive) {
        second_moment[t] = kDecay * second_moment[t] + (1.0 - kDecay) * grad[t].cwiseAbs2();
        direction[t] = -(grad[t].array() / (second_moment[t].array().sqrt() + kAdaptiveEps)).matrix();
      } else {
        direction[t] = -grad[t];
      }
    }

    double eta = config.step_size;
    bool accepted = false;
    double new_loss = loss;
    TwistParams candidate = params;
    for (int bt = 0; bt <= config.max_backtracks; ++bt, eta *= 0.5) {
      try {
        candidate = pin_gauge({params.twist.with_theta(add_scaled(params.twist.theta(), eta, direction)),
                               params.update_count + 1});
      } catch (const DomainError&) {
        continue;  // overflowed twist values; shrink the step
      }
      new_loss = loss_of(candidate);
      if (std::isfinite(new_loss) && new_loss <= loss) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Near a stationary point the achievable decrease drops below the
      // rounding of the loss and no step registers as descent.
      if (gnorm < 1e-6 * (1.0 + std::abs(loss))) break;
      throw DivergenceError("fit_twist: no descent step found at step " + std::to_string(step));
    }
    const double decrease = loss - new_loss;
    params = std::move(candidate);
    loss = new_loss;
    result.trace.push_back({step, loss, gnorm, eta});
    if (config.tolerance > 0.0 && decrease < config.tolerance) break;
  }
  if (result.trace.empty()) result.trace.push_back({0, loss, 0.0, 0.0});
  return result;
}

ProjectionBound projection_error_bound_check(const FkModel& model, const VectorXd& q_exact_log,
                                             const TwistParams& fitted, const TwistParams& prev,
                                             std::uint64_t cap) {
  const PathPair cur = enumerate_proposal_and_target(model, prev.twist, cap);
  const PathPair next = enumerate_proposal_and_target(model, fitted.twist, cap);
  if (q_exact_log.size() != cur.log_target.size()) {
    throw ShapeError("projection bound: q* has " + std::to_string(q_exact_log.size()) + " entries, expected " +
                     std::to_string(cur.log_target.size()));
  }
  const VectorXd& log_pi = cur.log_target;

  ProjectionBound b;
  const double kl_prev = kl_divergence(cur.log_proposal, log_pi);
  b.gain = kl_prev - kl_divergence(q_exact_log, log_pi);
  b.delta_forward = std::max(0.0, kl_divergence(q_exact_log, next.log_proposal));
  b.delta_backward = kl_divergence(next.log_proposal, q_exact_log);
  for (Index i = 0; i < log_pi.size(); ++i) {
    if (log_pi[i] == kNegInf && q_exact_log[i] == kNegInf) continue;
    b.M = std::max(b.M, std::abs(q_exact_log[i] - log_pi[i]));
  }
  b.lhs = kl_divergence(next.log_proposal, log_pi);
  b.rhs = kl_prev - b.gain + b.delta_backward + b.M * std::sqrt(2.0 * b.delta_forward);
  b.holds = b.lhs <= b.rhs + 1e-10;
  return b;
}

ExactTrustRegionStep exact_trust_region_step(const FkModel& model, const TwistFunction& twist, double epsilon,
                                             std::uint64_t cap) {
  ExactTrustRegionStep step;
  step.paths = enumerate_proposal_and_target(model, twist, cap);
  const VectorXd lw = step.paths.log_target.array() + step.paths.log_Z - step.paths.log_proposal.array();
  step.dual = solve_dual(lw, epsilon, step.paths.log_proposal);
  const VectorXd a = step.paths.log_proposal + step.dual.tau_hat * lw;
  step.log_q = a.array() - log_sum_exp(a);
  return step;
}

void write_loss_trace(std::ostream& os, const std::vector<LossTraceRow>& trace) {
  const auto old_precision = os.precision(17);
  os << "step\tloss\tgrad_norm\tstep_size\n";
  for (const auto& r : trace) os << r.step << '\t' << r.loss << '\t' << r.grad_norm << '\t' << r.step_size << '\n';
  os.precision(old_precision);
}

}  // namespace tritsmc
