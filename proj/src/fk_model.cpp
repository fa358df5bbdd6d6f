#include "tritsmc/fk_model.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace tritsmc {

namespace {

void check_normalized(const VectorXd& log_probs, const std::string& what) {
  if (log_probs.size() == 0) throw ShapeError(what + ": empty distribution");
  for (Index i = 0; i < log_probs.size(); ++i) {
    if (std::isnan(log_probs[i]) || log_probs[i] == std::numeric_limits<double>::infinity()) {
      throw DomainError(what + ": non-finite log-probability");
    }
  }
  const double total = std::exp(log_sum_exp(log_probs));
  if (!(std::abs(total - 1.0) <= FkModel::kNormTolerance)) {
    std::ostringstream os;
    os << what << ": probabilities sum to " << total << ", expected 1";
    throw DomainError(os.str());
  }
}

}  // namespace

FkModel::FkModel(VectorXd initial_log_probs, std::vector<MatrixXd> transition_log_probs,
                 StepVectors potential_log, double alpha)
    : initial_(std::move(initial_log_probs)),
      transitions_(std::move(transition_log_probs)),
      potentials_(std::move(potential_log)),
      alpha_(alpha) {
  if (transitions_.empty()) throw ShapeError("FkModel: horizon must be at least 1");
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw DomainError("FkModel: alpha must be positive");
  const std::size_t T = transitions_.size();
  if (potentials_.size() != T + 1) {
    throw ShapeError("FkModel: expected " + std::to_string(T + 1) + " potential vectors");
  }
  check_normalized(initial_, "initial distribution");
  if (initial_.size() != potentials_[0].size()) throw ShapeError("FkModel: S_0 mismatch");
  for (std::size_t t = 1; t <= T; ++t) {
    const MatrixXd& f = transitions_[t - 1];
    if (f.rows() != potentials_[t - 1].size() || f.cols() != potentials_[t].size()) {
      throw ShapeError("FkModel: transition " + std::to_string(t) + " has shape " +
                       std::to_string(f.rows()) + "x" + std::to_string(f.cols()));
    }
    for (Index r = 0; r < f.rows(); ++r) {
      check_normalized(f.row(r).transpose(), "transition " + std::to_string(t) + " row " + std::to_string(r));
    }
  }
  for (std::size_t t = 0; t <= T; ++t) {
    if (potentials_[t].size() == 0) throw ShapeError("FkModel: empty state space");
    if (!potentials_[t].allFinite()) {
      throw DomainError("FkModel: potential at step " + std::to_string(t) + " is not finite");
    }
  }
}

FkModel FkModel::with_unit_potentials(VectorXd initial_log_probs,
                                      std::vector<MatrixXd> transition_log_probs, double alpha) {
  StepVectors pots;
  pots.emplace_back(VectorXd::Zero(initial_log_probs.size()));
  for (const auto& f : transition_log_probs) pots.emplace_back(VectorXd::Zero(f.cols()));
  return FkModel(std::move(initial_log_probs), std::move(transition_log_probs), std::move(pots), alpha);
}

std::vector<Index> FkModel::state_sizes() const {
  std::vector<Index> out;
  out.reserve(potentials_.size());
  for (const auto& g : potentials_) out.push_back(g.size());
  return out;
}

FkModel FkModel::with_potentials(StepVectors potential_log) const {
  return FkModel(initial_, transitions_, std::move(potential_log), alpha_);
}

std::uint64_t FkModel::path_count_bound() const {
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t n = 1;
  for (const auto& g : potentials_) {
    const auto s = static_cast<std::uint64_t>(g.size());
    if (n > kMax / s) return kMax;
    n *= s;
  }
  return n;
}

void FkModel::validate(const Trajectory& traj) const {
  if (traj.size() != potentials_.size()) {
    throw InvalidTrajectoryError("trajectory has length " + std::to_string(traj.size()) +
                                 ", expected " + std::to_string(potentials_.size()));
  }
  for (std::size_t t = 0; t < traj.size(); ++t) {
    if (traj[t] < 0 || traj[t] >= potentials_[t].size()) {
      throw InvalidTrajectoryError("trajectory state " + std::to_string(traj[t]) + " at step " +
                                   std::to_string(t) + " is out of range");
    }
  }
}

FkModel from_terminal_reward(const FkModel& base, const VectorXd& reward, double alpha) {
  if (!(alpha > 0.0)) throw DomainError("from_terminal_reward: alpha must be positive");
  const int T = base.horizon();
  if (reward.size() != base.state_size(T)) {
    throw ShapeError("from_terminal_reward: reward has length " + std::to_string(reward.size()) +
                     ", expected " + std::to_string(base.state_size(T)));
  }
  StepVectors pots;
  for (int t = 0; t < T; ++t) pots.emplace_back(VectorXd::Zero(base.state_size(t)));
  pots.emplace_back(reward / alpha);
  return FkModel(base.initial_log_probs(), base.transitions(), std::move(pots), alpha);
}

double base_path_log_prob(const FkModel& model, const Trajectory& traj) {
  model.validate(traj);
  double lp = model.initial_log_probs()[traj[0]];
  for (int t = 1; t <= model.horizon(); ++t) {
    lp += model.transition_log_probs(t)(traj[t - 1], traj[t]);
  }
  return lp;
}

double potential_path_log(const FkModel& model, const Trajectory& traj) {
  model.validate(traj);
  double lg = 0.0;
  for (int t = 0; t <= model.horizon(); ++t) lg += model.potential_log(t)[traj[t]];
  return lg;
}

double exact_log_Z(const FkModel& model) {
  const int T = model.horizon();
  VectorXd beta = model.potential_log(T);
  for (int t = T - 1; t >= 0; --t) {
    const MatrixXd& f = model.transition_log_probs(t + 1);
    VectorXd next(f.rows());
    for (Index x = 0; x < f.rows(); ++x) next[x] = log_sum_exp(f.row(x).transpose() + beta);
    beta = model.potential_log(t) + next;
  }
  return log_sum_exp(model.initial_log_probs() + beta);
}

void for_each_supported_path(const FkModel& model, std::uint64_t cap,
                             const std::function<void(const Trajectory&, double)>& visit) {
  const int T = model.horizon();
  Trajectory path{std::vector<Index>(static_cast<std::size_t>(T + 1), 0)};
  std::vector<double> prefix(static_cast<std::size_t>(T + 1), 0.0);
  std::uint64_t count = 0;

  // Depth-first; prefix[t] holds the log-probability of x_0..x_t.
  std::function<void(int)> descend = [&](int t) {
    const Index n = model.state_size(t);
    for (Index x = 0; x < n; ++x) {
      const double step = t == 0 ? model.initial_log_probs()[x]
                                 : model.transition_log_probs(t)(path.states[static_cast<std::size_t>(t - 1)], x);
      if (step == kNegInf) continue;
      path.states[static_cast<std::size_t>(t)] = x;
      prefix[static_cast<std::size_t>(t)] = (t == 0 ? 0.0 : prefix[static_cast<std::size_t>(t - 1)]) + step;
      if (t == T) {
        if (++count > cap) {
          throw CapacityError("path enumeration exceeds cap of " + std::to_string(cap) + " paths");
        }
        visit(path, prefix[static_cast<std::size_t>(t)]);
      } else {
        descend(t + 1);
      }
    }
  };
  descend(0);
}

PathTable enumerate_paths(const FkModel& model, std::uint64_t cap) {
  PathTable table;
  std::vector<double> lps;
  for_each_supported_path(model, cap, [&](const Trajectory& p, double lp) {
    table.paths.push_back(p);
    lps.push_back(lp);
  });
  table.base_log_probs = Eigen::Map<const VectorXd>(lps.data(), static_cast<Index>(lps.size()));
  return table;
}

double ExactOracle::log_prob(const Trajectory& traj) const {
  const auto it = std::lower_bound(paths.begin(), paths.end(), traj);
  if (it == paths.end() || *it != traj) return kNegInf;
  return target_log_probs[it - paths.begin()];
}

ExactOracle enumerate_target(const FkModel& model, std::uint64_t cap) {
  PathTable table = enumerate_paths(model, cap);
  ExactOracle oracle;
  VectorXd unnorm(table.base_log_probs.size());
  for (std::size_t k = 0; k < table.paths.size(); ++k) {
    const auto i = static_cast<Index>(k);
    unnorm[i] = table.base_log_probs[i] + potential_path_log(model, table.paths[k]);
  }
  oracle.log_Z = log_sum_exp(unnorm);
  oracle.target_log_probs = unnorm.array() - oracle.log_Z;
  oracle.paths = std::move(table.paths);
  return oracle;
}

Trajectory sample_base_path(const FkModel& model, CounterRng& rng) {
  const int T = model.horizon();
  Trajectory traj{std::vector<Index>(static_cast<std::size_t>(T + 1))};
  VectorXd probs = exp_of(model.initial_log_probs().array());
  traj.states[0] = static_cast<Index>(sample_categorical({probs.data(), static_cast<std::size_t>(probs.size())}, rng.uniform()));
  for (int t = 1; t <= T; ++t) {
    probs = exp_of(model.transition_log_probs(t).row(traj.states[static_cast<std::size_t>(t - 1)]).transpose().array());
    traj.states[static_cast<std::size_t>(t)] =
        static_cast<Index>(sample_categorical({probs.data(), static_cast<std::size_t>(probs.size())}, rng.uniform()));
  }
  return traj;
}

}  // namespace tritsmc
