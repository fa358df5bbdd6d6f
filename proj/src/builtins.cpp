#include "tritsmc/builtins.hpp"

#include "tritsmc/rng.hpp"

#include <algorithm>

namespace tritsmc {

namespace {

constexpr std::uint64_t kChainStream = 0xC4A1;
constexpr std::uint64_t kMaskedStream = 0x3A5C;

// Dirichlet(1, ..., 1) row as log-probabilities.
VectorXd dirichlet_log_row(Index n, CounterRng& rng) {
  VectorXd e(n);
  for (Index i = 0; i < n; ++i) e[i] = -std::log(rng.uniform_open());
  return (e / e.sum()).array().log();
}

Index ipow(Index base, int exp) {
  Index r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

FkModel builtin_two_state() {
  const double lh = std::log(0.5);
  VectorXd mu = VectorXd::Constant(2, lh);
  std::vector<MatrixXd> f(2, MatrixXd::Constant(2, 2, lh));
  VectorXd reward(2);
  reward << 1.0, 0.0;
  return from_terminal_reward(FkModel::with_unit_potentials(mu, f), reward, 1.0);
}

FkModel builtin_chain(int S, int T, double reward_spread, std::uint64_t seed) {
  if (S < 2) throw ConfigError("builtin chain: S must be at least 2");
  if (T < 1) throw ConfigError("builtin chain: T must be at least 1");
  if (reward_spread < 0.0) throw ConfigError("builtin chain: reward_spread must be nonnegative");
  CounterRng rng(seed, {kChainStream});
  std::vector<MatrixXd> transitions;
  for (int t = 1; t <= T; ++t) {
    MatrixXd f(S, S);
    for (Index x = 0; x < S; ++x) f.row(x) = dirichlet_log_row(S, rng).transpose();
    transitions.push_back(std::move(f));
  }
  VectorXd reward(S);
  for (Index x = 0; x < S; ++x) reward[x] = reward_spread * rng.uniform();
  const VectorXd mu = VectorXd::Constant(S, -std::log(static_cast<double>(S)));
  return from_terminal_reward(FkModel::with_unit_potentials(mu, std::move(transitions)), reward, 1.0);
}

std::vector<int> masked_toy_decode(Index state, int L, int V) {
  std::vector<int> out(static_cast<std::size_t>(L));
  for (int j = 0; j < L; ++j) {
    out[static_cast<std::size_t>(j)] = static_cast<int>(state % (V + 1));
    state /= (V + 1);
  }
  return out;
}

FkModel builtin_masked_toy(int L, int V, std::uint64_t seed, double reward_spread) {
  if (L < 1 || V < 1) throw ConfigError("builtin masked toy: L and V must be positive");
  // Kernels are dense (V+1)^L x (V+1)^L matrices.
  if (static_cast<double>(L) * std::log(static_cast<double>(V + 1)) > std::log(4096.0)) {
    throw CapacityError("builtin masked toy: (V+1)^L exceeds 4096 states");
  }
  const Index n = ipow(V + 1, L);
  CounterRng rng(seed, {kMaskedStream});

  // Token tables: step t, conditioning symbol c in {0 (none/mask), 1..V}.
  std::vector<MatrixXd> token_tables;
  for (int t = 1; t <= L; ++t) {
    MatrixXd table(V + 1, V);
    for (Index c = 0; c <= V; ++c) table.row(c) = dirichlet_log_row(V, rng).transpose();
    token_tables.push_back(std::move(table));
  }

  std::vector<MatrixXd> transitions;
  for (int t = 1; t <= L; ++t) {
    MatrixXd f = MatrixXd::Constant(n, n, kNegInf);
    const Index stride = ipow(V + 1, t - 1);
    for (Index x = 0; x < n; ++x) {
      const auto symbols = masked_toy_decode(x, L, V);
      const int cond = t >= 2 ? symbols[static_cast<std::size_t>(t - 2)] : 0;
      const Index cleared = x - symbols[static_cast<std::size_t>(t - 1)] * stride;
      for (int v = 1; v <= V; ++v) {
        f(x, cleared + v * stride) = token_tables[static_cast<std::size_t>(t - 1)](cond, v - 1);
      }
    }
    transitions.push_back(std::move(f));
  }

  VectorXd reward = VectorXd::Zero(n);
  for (Index x = 0; x < n; ++x) {
    const auto symbols = masked_toy_decode(x, L, V);
    const bool complete = std::all_of(symbols.begin(), symbols.end(), [](int s) { return s > 0; });
    const double u = rng.uniform();
    if (complete) reward[x] = reward_spread * u;
  }
  VectorXd mu = VectorXd::Constant(n, kNegInf);
  mu[0] = 0.0;
  return from_terminal_reward(FkModel::with_unit_potentials(std::move(mu), std::move(transitions)), reward, 1.0);
}

StepVectors expected_terminal_reward(const FkModel& model) {
  const int T = model.horizon();
  StepVectors out(static_cast<std::size_t>(T + 1));
  out[static_cast<std::size_t>(T)] = model.alpha() * model.potential_log(T);
  for (int t = T - 1; t >= 0; --t) {
    const MatrixXd p = exp_of(model.transition_log_probs(t + 1).array());
    out[static_cast<std::size_t>(t)] = p * out[static_cast<std::size_t>(t + 1)];
  }
  return out;
}

}  // namespace tritsmc
