#ifndef TRITSMC_BUILTINS_HPP
#define TRITSMC_BUILTINS_HPP

#include "tritsmc/fk_model.hpp"

#include <cstdint>

namespace tritsmc {

/// Two binary steps, uniform mu and kernels, terminal reward (1, 0), alpha = 1.
/// Z = (e + 1) / 2.
FkModel builtin_two_state();

/// S states per step, horizon T, Dirichlet(1, ..., 1) kernel rows, uniform mu,
/// terminal reward uniform on [0, reward_spread], alpha = 1.
FkModel builtin_chain(int S, int T, double reward_spread, std::uint64_t seed);

/// Left-to-right unmasking of L positions over a vocabulary of V tokens.
/// Every step's state is the composite index sum_j s_j (V+1)^j with s_j = 0
/// for a mask and 1..V for a token. Step t writes position t-1 with a seeded
/// token distribution conditioned on position t-2 (or on nothing at t = 1);
/// the terminal reward is a seeded score in [0, reward_spread] per fully
/// unmasked sequence (0 for sequences that still carry a mask). alpha = 1.
FkModel builtin_masked_toy(int L, int V, std::uint64_t seed, double reward_spread = 3.0);

/// Decodes a masked-toy composite state into per-position symbols (0 = mask).
std::vector<int> masked_toy_decode(Index state, int L, int V);

/// E_P[r(X_T) | X_t = x] for r = alpha log g_T, per step.
StepVectors expected_terminal_reward(const FkModel& model);

}  // namespace tritsmc

#endif  // TRITSMC_BUILTINS_HPP
