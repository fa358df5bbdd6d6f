#include "tritsmc/optimal_twist.hpp"

#include <algorithm>

namespace tritsmc {

namespace {

// log sum_x' f(x'|x) exp(v(x')) for every row x.
VectorXd backup(const MatrixXd& log_f, const VectorXd& v) {
  VectorXd out(log_f.rows());
  for (Index x = 0; x < log_f.rows(); ++x) out[x] = log_sum_exp(log_f.row(x).transpose() + v);
  return out;
}

}  // namespace

OptimalTwistResult backward_recursion(const FkModel& model) {
  const int T = model.horizon();
  StepVectors log_psi(static_cast<std::size_t>(T + 1));
  log_psi[static_cast<std::size_t>(T)] = model.potential_log(T);
  for (int t = T - 1; t >= 0; --t) {
    log_psi[static_cast<std::size_t>(t)] =
        model.potential_log(t) + backup(model.transition_log_probs(t + 1), log_psi[static_cast<std::size_t>(t + 1)]);
  }
  OptimalTwistResult out{TwistFunction::tabular(log_psi), {}, 0.0};
  for (const auto& lp : log_psi) out.soft_values.emplace_back(model.alpha() * lp);
  out.log_Z_from_recursion = log_sum_exp(model.initial_log_probs() + log_psi[0]);
  return out;
}

double soft_bellman_residual(const FkModel& model, const StepVectors& values, double alpha) {
  const int T = model.horizon();
  if (!(alpha > 0.0)) throw DomainError("soft_bellman_residual: alpha must be positive");
  if (values.size() != static_cast<std::size_t>(T + 1)) throw ShapeError("soft_bellman_residual: wrong step count");
  for (int t = 0; t <= T; ++t) {
    if (values[static_cast<std::size_t>(t)].size() != model.state_size(t)) {
      throw ShapeError("soft_bellman_residual: values at step " + std::to_string(t) + " have wrong length");
    }
  }
  double worst =
      (values[static_cast<std::size_t>(T)] - alpha * model.potential_log(T)).cwiseAbs().maxCoeff();
  for (int t = 0; t < T; ++t) {
    const VectorXd rhs =
        alpha * model.potential_log(t) +
        alpha * backup(model.transition_log_probs(t + 1), values[static_cast<std::size_t>(t + 1)] / alpha);
    worst = std::max(worst, (values[static_cast<std::size_t>(t)] - rhs).cwiseAbs().maxCoeff());
  }
  return worst;
}

ZeroVarianceReport zero_variance_check(const FkModel& model, const TwistFunction& twist,
                                       std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw DomainError("zero_variance_check: n_samples must be at least 1");
  const TwistedModel tm(model, twist);
  ZeroVarianceReport rep;
  rep.log_Z = exact_log_Z(model);
  rep.n_samples = n_samples;

  VectorXd lw(static_cast<Index>(n_samples));
  for (std::size_t k = 0; k < n_samples; ++k) {
    CounterRng rng(seed, {0x7A5Eu, k});
    lw[static_cast<Index>(k)] = residual_log_weight(tm, tm.sample(rng));
  }
  rep.max_abs_dev_from_logZ = (lw.array() - rep.log_Z).abs().maxCoeff();
  const Eigen::ArrayXd w = exp_of(lw.array());
  rep.mean = w.mean();
  rep.variance = n_samples > 1 ? (w - rep.mean).square().sum() / static_cast<double>(n_samples - 1) : 0.0;
  return rep;
}

}  // namespace tritsmc
