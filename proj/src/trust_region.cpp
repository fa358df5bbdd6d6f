#include "tritsmc/trust_region.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

namespace tritsmc {

namespace {

VectorXd uniform_log_masses(Index n) { return VectorXd::Constant(n, -std::log(static_cast<double>(n))); }

VectorXd normalized(const VectorXd& log_masses) { return log_masses.array() - log_sum_exp(log_masses); }

void check_weights(const VectorXd& lw, const char* who) {
  if (lw.size() == 0) throw DomainError(std::string(who) + ": no weights");
  if (!lw.allFinite()) throw DomainError(std::string(who) + ": non-finite residual log-weight");
}

// KL(q_tau || p) for q_tau proportional to p exp(tau lw), p normalized.
double tempered_kl(const VectorXd& lw, const VectorXd& log_p, double tau) {
  const VectorXd a = log_p + tau * lw;
  const double Lambda = log_sum_exp(a);
  const VectorXd q = exp_of(a.array() - Lambda);
  return tau * q.dot(lw) - Lambda;
}

}  // namespace

double dual_objective(double lambda, const VectorXd& residual_log_weights, double epsilon,
                      const VectorXd& log_masses) {
  const VectorXd lp = normalized(log_masses);
  const double tau = 1.0 / (1.0 + lambda);
  return lambda * epsilon + (1.0 + lambda) * log_sum_exp(lp + tau * residual_log_weights);
}

double dual_objective(double lambda, const VectorXd& residual_log_weights, double epsilon) {
  return dual_objective(lambda, residual_log_weights, epsilon, uniform_log_masses(residual_log_weights.size()));
}

VectorXd tempered_weights(const VectorXd& residual_log_weights, double tau, const VectorXd& log_masses) {
  return normalize_log_weights(log_masses + tau * residual_log_weights);
}

VectorXd tempered_weights(const VectorXd& residual_log_weights, double tau) {
  return normalize_log_weights(tau * residual_log_weights);
}

TrustRegionResult solve_dual(const VectorXd& residual_log_weights, double epsilon, const VectorXd& log_masses) {
  check_weights(residual_log_weights, "solve_dual");
  if (!(epsilon > 0.0)) throw DomainError("solve_dual: epsilon must be positive");
  if (log_masses.size() != residual_log_weights.size()) throw ShapeError("solve_dual: mass/weight length mismatch");
  const VectorXd lp = normalized(log_masses);
  const VectorXd& lw = residual_log_weights;

  auto objective_at_tau = [&](double tau) { return dual_objective(1.0 / tau - 1.0, lw, epsilon, lp); };
  auto finish = [&](double tau) {
    TrustRegionResult r;
    r.tau_hat = tau;
    r.lambda_hat = tau == 1.0 ? 0.0 : 1.0 / tau - 1.0;
    r.tempered_weights = tempered_weights(lw, tau, lp);
    r.dual_value = objective_at_tau(tau);
    return r;
  };

  if (lw.maxCoeff() == lw.minCoeff() || tempered_kl(lw, lp, 1.0) <= epsilon) return finish(1.0);

  // d/dtau of the dual is (KL(q_tau || p) - eps) / tau^2, so the objective is
  // unimodal in tau with its minimum where the constraint binds.
  constexpr double kInvPhi = 0.6180339887498948482;
  double a = kTauMin;
  double b = 1.0;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = objective_at_tau(c);
  double fd = objective_at_tau(d);
  while (b - a > kTauBracket) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = objective_at_tau(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = objective_at_tau(d);
    }
  }
  return finish(0.5 * (a + b));
}

TrustRegionResult solve_dual(const VectorXd& residual_log_weights, double epsilon) {
  return solve_dual(residual_log_weights, epsilon, uniform_log_masses(residual_log_weights.size()));
}

double kl_divergence(const VectorXd& log_p, const VectorXd& log_q) {
  if (log_p.size() != log_q.size()) throw ShapeError("kl_divergence: length mismatch");
  double kl = 0.0;
  for (Index i = 0; i < log_p.size(); ++i) {
    if (log_p[i] == kNegInf) continue;
    kl += std::exp(log_p[i]) * (log_p[i] - log_q[i]);
  }
  return kl;
}

PathPair enumerate_proposal_and_target(const FkModel& model, const TwistFunction& twist, std::uint64_t cap) {
  const TwistedModel tm(model, twist);
  PathPair out;
  std::vector<double> lprop;
  std::vector<double> lgamma;
  for_each_supported_path(model, cap, [&](const Trajectory& path, double base_lp) {
    out.paths.push_back(path);
    lprop.push_back(twisted_path_log_prob(tm, path));
    lgamma.push_back(base_lp + potential_path_log(model, path));
  });
  const auto n = static_cast<Index>(lprop.size());
  out.log_proposal = Eigen::Map<const VectorXd>(lprop.data(), n);
  const VectorXd g = Eigen::Map<const VectorXd>(lgamma.data(), n);
  out.log_Z = log_sum_exp(g);
  out.log_target = g.array() - out.log_Z;
  return out;
}

EscortDiagnostics escort_diagnostics(const VectorXd& log_proposal, const VectorXd& log_target,
                                     const std::vector<double>& taus) {
  if (log_proposal.size() != log_target.size()) throw ShapeError("escort_diagnostics: length mismatch");
  const VectorXd log_R = log_target - log_proposal;
  auto Lambda = [&](double tau) { return log_sum_exp(log_proposal + tau * log_R); };

  EscortDiagnostics diag;
  for (double tau : taus) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("escort_diagnostics: tau outside [0, 1]");
    const double L = Lambda(tau);
    const VectorXd q = (log_proposal + tau * log_R).array() - L;
    const double mean_log_R = exp_of(q.array()).matrix().dot(log_R);
    diag.taus.push_back(tau);
    diag.Lambda.push_back(L);
    diag.kl_to_proposal.push_back(tau * mean_log_R - L);
    diag.kl_to_target.push_back((tau - 1.0) * mean_log_R - L);
    diag.chi2_to_target.push_back(std::expm1(L + Lambda(2.0 - tau)));
  }
  return diag;
}

EscortDiagnostics escort_diagnostics(const FkModel& model, const TwistFunction& twist,
                                     const std::vector<double>& taus, std::uint64_t cap) {
  const PathPair pp = enumerate_proposal_and_target(model, twist, cap);
  return escort_diagnostics(pp.log_proposal, pp.log_target, taus);
}

ProposalDivergences proposal_divergences(const FkModel& model, const TwistFunction& twist) {
  const TwistedModel tm(model, twist);
  const int T = model.horizon();
  const double log_Z = exact_log_Z(model);

  StepVectors lw(static_cast<std::size_t>(T + 1));
  for (int t = 0; t <= T; ++t) {
    VectorXd v(model.state_size(t));
    for (Index x = 0; x < v.size(); ++x) v[x] = incremental_log_weight(tm, t, x);
    lw[static_cast<std::size_t>(t)] = std::move(v);
  }

  // E_{P^psi}[log w] through the forward marginals.
  VectorXd marginal = exp_of(tm.twisted_initial_log_probs().array());
  double mean_log_w = marginal.dot(lw[0]);
  for (int t = 1; t <= T; ++t) {
    marginal = exp_of(tm.twisted_transition_log_probs(t).array()).matrix().transpose() * marginal;
    mean_log_w += marginal.dot(lw[static_cast<std::size_t>(t)]);
  }

  // log E_{P^psi}[w^2] by a backward pass.
  VectorXd back = 2.0 * lw[static_cast<std::size_t>(T)];
  for (int t = T - 1; t >= 0; --t) {
    const MatrixXd& k = tm.twisted_transition_log_probs(t + 1);
    VectorXd next(k.rows());
    for (Index x = 0; x < k.rows(); ++x) next[x] = log_sum_exp(k.row(x).transpose() + back);
    back = 2.0 * lw[static_cast<std::size_t>(t)] + next;
  }
  const double log_second_moment = log_sum_exp(tm.twisted_initial_log_probs() + back);

  return {log_Z - mean_log_w, std::expm1(log_second_moment - 2.0 * log_Z)};
}

double supported_path_count(const FkModel& model) {
  VectorXd count = (model.initial_log_probs().array() > kNegInf).cast<double>();
  for (int t = 1; t <= model.horizon(); ++t) {
    const MatrixXd support = (model.transition_log_probs(t).array() > kNegInf).cast<double>();
    count = support.transpose() * count;
  }
  return count.sum();
}

std::vector<double> uniform_tau_grid(std::size_t n) {
  if (n < 2) throw DomainError("uniform_tau_grid: need at least two points");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

Chi2Check chi2_variance_identity_check(const FkModel& model, const TwistFunction& twist, double tau,
                                       std::uint64_t cap) {
  const PathPair pp = enumerate_proposal_and_target(model, twist, cap);
  const double log_Z = exact_log_Z(model);

  // q_tau by direct normalization of P^{1-tau} pi^tau.
  const VectorXd a = (1.0 - tau) * pp.log_proposal + tau * pp.log_target;
  const VectorXd log_q = a.array() - log_sum_exp(a);
  double lhs = 0.0;
  for (Index i = 0; i < log_q.size(); ++i) {
    const double log_gamma = pp.log_target[i] + pp.log_Z;
    const double ratio = std::exp(log_gamma - log_q[i] - log_Z);
    lhs += std::exp(log_q[i]) * (ratio - 1.0) * (ratio - 1.0);
  }
  Chi2Check c;
  c.lhs = lhs;
  c.rhs = escort_diagnostics(pp.log_proposal, pp.log_target, {tau}).chi2_to_target.front();
  c.abs_diff = std::abs(c.lhs - c.rhs);
  return c;
}

std::vector<double> annealing_beta_sequence(const std::vector<double>& lambdas) {
  std::vector<double> beta{0.0};
  for (double lam : lambdas) {
    if (!(lam >= 0.0)) throw DomainError("annealing_beta_sequence: lambda must be nonnegative");
    const double b = beta.back();
    beta.push_back(b + (1.0 - b) / (1.0 + lam));
  }
  return beta;
}

void write_escort_table(std::ostream& os, const EscortDiagnostics& diag) {
  const auto old_precision = os.precision(17);
  os << "tau\tLambda\tkl_to_proposal\tkl_to_target\tchi2\n";
  for (std::size_t i = 0; i < diag.taus.size(); ++i) {
    os << diag.taus[i] << '\t' << diag.Lambda[i] << '\t' << diag.kl_to_proposal[i] << '\t'
       << diag.kl_to_target[i] << '\t' << diag.chi2_to_target[i] << '\n';
  }
  os.precision(old_precision);
}

}  // namespace tritsmc
