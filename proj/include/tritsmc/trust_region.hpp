#ifndef TRITSMC_TRUST_REGION_HPP
#define TRITSMC_TRUST_REGION_HPP

#include "tritsmc/common.hpp"
#include "tritsmc/fk_model.hpp"
#include "tritsmc/twist.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace tritsmc {

struct TrustRegionResult {
  double lambda_hat = 0.0;
  /// 1 / (1 + lambda_hat).
  double tau_hat = 1.0;
  VectorXd tempered_weights;
  double dual_value = 0.0;
};

inline constexpr double kTauMin = 1e-6;
inline constexpr double kTauBracket = 1e-10;

/// lambda eps + (1 + lambda) log (1/K) sum_k exp(lw_k / (1 + lambda)).
double dual_objective(double lambda, const VectorXd& residual_log_weights, double epsilon);

/// Same objective with the sample average replaced by a weighted average over
/// atoms of (unnormalized) log-mass `log_masses`. Used when the "samples" are
/// an exact enumeration of the proposal.
double dual_objective(double lambda, const VectorXd& residual_log_weights, double epsilon,
                      const VectorXd& log_masses);

/// Minimizes the empirical dual over tau = 1/(1+lambda) in [kTauMin, 1] by
/// golden-section search. Returns tau = 1 when the KL constraint is slack at
/// the self-normalized target, or when all weights coincide.
TrustRegionResult solve_dual(const VectorXd& residual_log_weights, double epsilon);
TrustRegionResult solve_dual(const VectorXd& residual_log_weights, double epsilon, const VectorXd& log_masses);

/// w_k proportional to exp(tau lw_k), normalized.
VectorXd tempered_weights(const VectorXd& residual_log_weights, double tau);
/// w_k proportional to m_k exp(tau lw_k), normalized.
VectorXd tempered_weights(const VectorXd& residual_log_weights, double tau, const VectorXd& log_masses);

/// KL(p || q) for log-probability vectors over the same atoms; atoms with
/// p = 0 contribute nothing.
double kl_divergence(const VectorXd& log_p, const VectorXd& log_q);

/// Curves along the escort path q_tau proportional to R^tau P, R = d pi / d P.
struct EscortDiagnostics {
  std::vector<double> taus;
  std::vector<double> Lambda;
  std::vector<double> kl_to_proposal;
  std::vector<double> kl_to_target;
  std::vector<double> chi2_to_target;
};

/// Proposal and target log-probabilities over every supported path.
struct PathPair {
  std::vector<Trajectory> paths;
  VectorXd log_proposal;
  VectorXd log_target;
  /// log of the enumerated unnormalized target mass.
  double log_Z = 0.0;
};

/// Enumerates P^psi and pi over the supported paths.
PathPair enumerate_proposal_and_target(const FkModel& model, const TwistFunction& twist,
                                       std::uint64_t cap = kDefaultPathCap);

/// Escort curves from explicit proposal/target log-probabilities.
EscortDiagnostics escort_diagnostics(const VectorXd& log_proposal, const VectorXd& log_target,
                                     const std::vector<double>& taus);

EscortDiagnostics escort_diagnostics(const FkModel& model, const TwistFunction& twist,
                                     const std::vector<double>& taus, std::uint64_t cap = kDefaultPathCap);

/// KL(P^psi || pi) and chi^2(pi || P^psi) by forward/backward recursions over
/// the twisted kernels, without enumerating paths.
struct ProposalDivergences {
  double kl_to_target = 0.0;
  double chi2_to_target = 0.0;
};

ProposalDivergences proposal_divergences(const FkModel& model, const TwistFunction& twist);

/// Number of paths with positive base probability (as a double; exact up to 2^53).
double supported_path_count(const FkModel& model);

/// n evenly spaced points on [0, 1].
std::vector<double> uniform_tau_grid(std::size_t n);

struct Chi2Check {
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_diff = 0.0;
};

/// Var_{q_tau}[gamma / q_tau] / Z^2 by direct enumeration against the escort
/// chi-square curve at tau.
Chi2Check chi2_variance_identity_check(const FkModel& model, const TwistFunction& twist, double tau,
                                       std::uint64_t cap = kDefaultPathCap);

/// beta_0 = 0, beta_{i+1} = beta_i + (1 - beta_i) / (1 + lambda_i). Returns
/// beta_0..beta_n for n multipliers.
std::vector<double> annealing_beta_sequence(const std::vector<double>& lambdas);

/// Tab-separated: tau, Lambda, kl_to_proposal, kl_to_target, chi2.
void write_escort_table(std::ostream& os, const EscortDiagnostics& diag);

}  // namespace tritsmc

#endif  // TRITSMC_TRUST_REGION_HPP
