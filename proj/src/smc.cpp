#include "tritsmc/smc.hpp"

#include <algorithm>
#include <exception>
#include <iomanip>
#include <ostream>
#include <thread>

namespace tritsmc {

namespace {

constexpr std::uint64_t kResampleStream = 0xA11CE5ULL;
constexpr std::uint64_t kBestOfNStream = 0xB0AULL;

struct ParticleDynamics {
  std::function<Index(CounterRng&)> sample_initial;
  std::function<Index(int, Index, CounterRng&)> sample_transition;
  /// Incremental log-weight at step t; path is filled through t.
  std::function<double(int, const Trajectory&)> incremental;
  std::function<double(const Trajectory&)> full_path_log_weight;
};

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

SmcOutput run_particle_system(int horizon, const ParticleDynamics& dyn, const SmcOptions& opt) {
  const std::size_t K = opt.num_particles;
  if (K == 0) throw DomainError("SMC: particle count must be at least 1");
  const std::vector<int> schedule = normalize_schedule(opt.schedule, horizon);

  std::vector<Trajectory> paths(K, Trajectory{std::vector<Index>(static_cast<std::size_t>(horizon + 1), 0)});
  VectorXd acc = VectorXd::Zero(static_cast<Index>(K));
  SmcOutput out;
  out.schedule = schedule;
  out.seed = opt.seed;

  auto next_stage = schedule.begin();
  for (int t = 0; t <= horizon; ++t) {
    parallel_for(K, opt.threads, [&](std::size_t k) {
      CounterRng rng(opt.seed, {opt.stream, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(t)});
      auto& states = paths[k].states;
      states[static_cast<std::size_t>(t)] =
          t == 0 ? dyn.sample_initial(rng) : dyn.sample_transition(t, states[static_cast<std::size_t>(t - 1)], rng);
      acc[static_cast<Index>(k)] += dyn.incremental(t, paths[k]);
    });
    out.states_sampled += K;
    for (Index k = 0; k < acc.size(); ++k) {
      if (!std::isfinite(acc[k])) {
        throw DomainError("SMC: non-finite weight for particle " + std::to_string(k) + " at step " +
                          std::to_string(t));
      }
    }

    if (next_stage != schedule.end() && *next_stage == t) {
      ++next_stage;
      out.log_Z_estimate += log_mean_exp(acc);
      const VectorXd w = normalize_log_weights(acc);
      out.ess.push_back(ess(w));
      out.ess_steps.push_back(t);
      CounterRng rng(opt.seed, {opt.stream, kResampleStream, static_cast<std::uint64_t>(t)});
      const auto ancestors = multinomial_resample(w, rng);
      std::vector<Trajectory> next(K);
      for (std::size_t k = 0; k < K; ++k) next[k] = paths[ancestors[k]];
      paths = std::move(next);
      acc.setZero();
    }
  }
  out.log_Z_estimate += log_mean_exp(acc);
  out.ess.push_back(ess(normalize_log_weights(acc)));
  out.ess_steps.push_back(horizon);
  out.final_block_log_weights = acc;
  out.residual_log_weights.resize(static_cast<Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    out.residual_log_weights[static_cast<Index>(k)] = dyn.full_path_log_weight(paths[k]);
  }
  out.trajectories = std::move(paths);
  return out;
}

}  // namespace

std::vector<int> interval_schedule(int horizon, int interval) {
  if (interval < 1) throw ConfigError("resampling interval must be at least 1");
  std::vector<int> out;
  for (int t = interval; t < horizon; t += interval) out.push_back(t);
  return out;
}

std::vector<int> normalize_schedule(std::vector<int> schedule, int horizon) {
  std::sort(schedule.begin(), schedule.end());
  schedule.erase(std::unique(schedule.begin(), schedule.end()), schedule.end());
  for (int t : schedule) {
    if (t < 0 || t >= horizon) {
      throw ConfigError("resampling step " + std::to_string(t) + " outside [0, " + std::to_string(horizon - 1) + "]");
    }
  }
  return schedule;
}

double SmcOutput::weighted_terminal_mean(const VectorXd& h) const {
  const VectorXd w = normalized_weights();
  double m = 0.0;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    m += w[static_cast<Index>(k)] * h[trajectories[k].states.back()];
  }
  return m;
}

SmcOutput run_twisted_smc(const TwistedModel& tm, const SmcOptions& options) {
  ParticleDynamics dyn{
      [&](CounterRng& rng) { return tm.sample_initial(rng); },
      [&](int t, Index prev, CounterRng& rng) { return tm.sample_transition(t, prev, rng); },
      [&](int t, const Trajectory& path) { return incremental_log_weight(tm, t, path[static_cast<std::size_t>(t)]); },
      [&](const Trajectory& path) { return residual_log_weight(tm, path); },
  };
  return run_particle_system(tm.horizon(), dyn, options);
}

SmcOutput run_twisted_smc(const FkModel& model, const TwistFunction& twist, const SmcOptions& options) {
  return run_twisted_smc(TwistedModel(model, twist), options);
}

std::vector<std::size_t> multinomial_resample(std::span<const double> normalized_weights, CounterRng& rng) {
  const std::size_t K = normalized_weights.size();
  double total = 0.0;
  for (double w : normalized_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("multinomial_resample: weights must be finite and nonnegative");
    total += w;
  }
  if (total <= 0.0) throw DegeneracyError("multinomial_resample: all weights are zero");
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("multinomial_resample: weights are not normalized");
  std::vector<std::size_t> ancestors(K);
  for (auto& a : ancestors) a = sample_categorical(normalized_weights, rng.uniform());
  return ancestors;
}

std::vector<std::size_t> multinomial_resample(const VectorXd& normalized_weights, CounterRng& rng) {
  return multinomial_resample(std::span<const double>(normalized_weights.data(), static_cast<std::size_t>(normalized_weights.size())), rng);
}

double ess(const VectorXd& normalized_weights) { return 1.0 / normalized_weights.squaredNorm(); }

BestOfN best_of_n(const FkModel& model, std::size_t num_samples, std::uint64_t seed) {
  if (num_samples == 0) throw DomainError("best_of_n: need at least one sample");
  const VectorXd& terminal = model.potential_log(model.horizon());
  BestOfN best;
  for (std::size_t k = 0; k < num_samples; ++k) {
    CounterRng rng(seed, {kBestOfNStream, k});
    Trajectory traj = sample_base_path(model, rng);
    const double score = terminal[traj.states.back()];
    if (k == 0 || score > best.terminal_log_potential) {
      best = {std::move(traj), k, score};
    }
  }
  return best;
}

SmcOutput potential_smc_baseline(const FkModel& model, const StepVectors& intermediate_rewards,
                                 PotentialVariant variant, double lambda_scale, const SmcOptions& options) {
  const int T = model.horizon();
  const std::vector<int> stages = normalize_schedule(options.schedule, T);
  for (int s : stages) {
    if (static_cast<std::size_t>(s) >= intermediate_rewards.size() ||
        intermediate_rewards[static_cast<std::size_t>(s)].size() != model.state_size(s)) {
      throw ConfigError("potential SMC: missing intermediate reward estimate for step " + std::to_string(s));
    }
  }
  auto stage_log_potential = [&](std::size_t j, const Trajectory& path) {
    const auto s = static_cast<std::size_t>(stages[j]);
    const double cur = intermediate_rewards[s][path[s]];
    if (j == 0) return lambda_scale * cur;
    const auto p = static_cast<std::size_t>(stages[j - 1]);
    const double prev = intermediate_rewards[p][path[p]];
    return variant == PotentialVariant::diff ? lambda_scale * (cur - prev) : lambda_scale * std::max(cur, prev);
  };

  ParticleDynamics dyn{
      [&](CounterRng& rng) {
        const VectorXd p = exp_of(model.initial_log_probs().array());
        return static_cast<Index>(sample_categorical({p.data(), static_cast<std::size_t>(p.size())}, rng.uniform()));
      },
      [&](int t, Index prev, CounterRng& rng) {
        const VectorXd p = exp_of(model.transition_log_probs(t).row(prev).transpose().array());
        return static_cast<Index>(sample_categorical({p.data(), static_cast<std::size_t>(p.size())}, rng.uniform()));
      },
      [&](int t, const Trajectory& path) {
        double lw = model.potential_log(t)[path[static_cast<std::size_t>(t)]];
        const auto it = std::find(stages.begin(), stages.end(), t);
        if (it != stages.end()) lw += stage_log_potential(static_cast<std::size_t>(it - stages.begin()), path);
        if (t == T) {
          for (std::size_t j = 0; j < stages.size(); ++j) lw -= stage_log_potential(j, path);
        }
        return lw;
      },
      [&](const Trajectory& path) { return potential_path_log(model, path); },
  };
  SmcOptions opt = options;
  opt.schedule = stages;
  return run_particle_system(T, dyn, opt);
}

void write_smc_table(std::ostream& os, const SmcOutput& out) {
  const auto old_precision = os.precision(17);
  os << "# log_Z_estimate\t" << out.log_Z_estimate << '\n';
  os << "# seed\t" << out.seed << '\n';
  os << "# schedule";
  for (int s : out.schedule) os << '\t' << s;
  os << '\n';
  os << "# ess";
  for (std::size_t i = 0; i < out.ess.size(); ++i) os << '\t' << out.ess_steps[i] << ':' << out.ess[i];
  os << '\n';
  os << "particle";
  if (!out.trajectories.empty()) {
    for (std::size_t t = 0; t < out.trajectories.front().size(); ++t) os << "\tx" << t;
  }
  os << "\tresidual_log_weight\tfinal_block_log_weight\n";
  for (std::size_t k = 0; k < out.trajectories.size(); ++k) {
    os << k;
    for (Index s : out.trajectories[k].states) os << '\t' << s;
    os << '\t' << out.residual_log_weights[static_cast<Index>(k)] << '\t'
       << out.final_block_log_weights[static_cast<Index>(k)] << '\n';
  }
  os.precision(old_precision);
}

}  // namespace tritsmc
