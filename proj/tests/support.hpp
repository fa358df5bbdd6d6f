// Test fixtures and brute-force references that share no code with the library
// beyond the model container.
#ifndef TRITSMC_TESTS_SUPPORT_HPP
#define TRITSMC_TESTS_SUPPORT_HPP

#include "tritsmc/fk_model.hpp"
#include "tritsmc/twist.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace testing {

using tritsmc::FkModel;
using tritsmc::Index;
using tritsmc::MatrixXd;
using tritsmc::StepVectors;
using tritsmc::Trajectory;
using tritsmc::TwistFunction;
using tritsmc::VectorXd;

inline const double kE = std::exp(1.0);
inline const double kC1LogZ = std::log((kE + 1.0) / 2.0);

// Random model with varying state sizes. When `sparse`, about a third of the
// transitions are forbidden (each row keeps at least one entry).
inline FkModel random_model(std::uint64_t seed, int T = 3, int max_states = 4, bool sparse = false,
                            double alpha = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  std::uniform_int_distribution<int> size(2, max_states);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Index> S;
  for (int t = 0; t <= T; ++t) S.push_back(size(gen));

  auto log_row = [&](Index n) {
    VectorXd p(n);
    for (Index i = 0; i < n; ++i) p[i] = unif(gen);
    if (sparse) {
      for (Index i = 1; i < n; ++i) {
        if (unif(gen) < 0.35) p[i] = 0.0;
      }
    }
    return VectorXd((p / p.sum()).array().log());
  };
  VectorXd mu = log_row(S[0]);
  std::vector<MatrixXd> f;
  for (int t = 1; t <= T; ++t) {
    MatrixXd m(S[t - 1], S[t]);
    for (Index x = 0; x < S[t - 1]; ++x) m.row(x) = log_row(S[t]).transpose();
    f.push_back(m);
  }
  StepVectors g;
  for (int t = 0; t <= T; ++t) {
    VectorXd v(S[t]);
    for (Index x = 0; x < S[t]; ++x) v[x] = normal(gen);
    g.push_back(v);
  }
  return FkModel(mu, f, g, alpha);
}

inline TwistFunction random_twist(const FkModel& model, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed ^ 0x5eed);
  std::normal_distribution<double> normal(0.0, scale);
  StepVectors tables;
  for (int t = 0; t <= model.horizon(); ++t) {
    VectorXd v(model.state_size(t));
    for (Index x = 0; x < v.size(); ++x) v[x] = normal(gen);
    tables.push_back(v);
  }
  return TwistFunction::tabular(tables);
}

// Every index tuple in the product space, supported or not, odometer order.
inline std::vector<Trajectory> all_tuples(const FkModel& model) {
  std::vector<Trajectory> out;
  Trajectory cur{std::vector<Index>(static_cast<std::size_t>(model.horizon() + 1), 0)};
  while (true) {
    out.push_back(cur);
    int t = model.horizon();
    while (t >= 0) {
      auto& s = cur.states[static_cast<std::size_t>(t)];
      if (++s < model.state_size(t)) break;
      s = 0;
      --t;
    }
    if (t < 0) break;
  }
  return out;
}

inline double brute_base_log(const FkModel& m, const Trajectory& x) {
  double lp = m.initial_log_probs()[x[0]];
  for (int t = 1; t <= m.horizon(); ++t) lp += m.transition_log_probs(t)(x[t - 1], x[t]);
  return lp;
}

inline double brute_log_gamma(const FkModel& m, const Trajectory& x) {
  double lp = brute_base_log(m, x);
  for (int t = 0; t <= m.horizon(); ++t) lp += m.potential_log(t)[x[t]];
  return lp;
}

inline double brute_log_Z(const FkModel& m) {
  double z = 0.0;
  for (const auto& x : all_tuples(m)) z += std::exp(brute_log_gamma(m, x));
  return std::log(z);
}

// Twisted path probability by normalizing psi_t(x') f_t(x'|x) row by row.
inline double brute_twisted_log(const FkModel& m, const TwistFunction& tw, const Trajectory& x) {
  auto lp_row = [&](const VectorXd& base, const VectorXd& log_psi, Index pick) {
    const VectorXd w = (base + log_psi).unaryExpr([](double v) { return std::exp(v); });
    return std::log(w[pick] / w.sum());
  };
  double lp = lp_row(m.initial_log_probs(), tw.log_psi_table(0), x[0]);
  for (int t = 1; t <= m.horizon(); ++t) {
    lp += lp_row(m.transition_log_probs(t).row(x[t - 1]).transpose(), tw.log_psi_table(t), x[t]);
  }
  return lp;
}

}  // namespace testing

#endif  // TRITSMC_TESTS_SUPPORT_HPP
