#include "support.hpp"

#include "tritsmc/builtins.hpp"
#include "tritsmc/optimal_twist.hpp"

#include <doctest.h>

#include <map>

using namespace tritsmc;
using namespace testing;

TEST_CASE("recursion reproduces the partition function") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const FkModel m = random_model(s, 3, 4, s % 3 == 0);
    const OptimalTwistResult r = backward_recursion(m);
    CHECK(std::abs(r.log_Z_from_recursion - brute_log_Z(m)) < 1e-12);
  }
  CHECK(std::abs(backward_recursion(builtin_two_state()).log_Z_from_recursion - kC1LogZ) < 1e-12);
}

TEST_CASE("optimal twist on the two-state model") {
  const OptimalTwistResult r = backward_recursion(builtin_two_state());
  const double z = (kE + 1.0) / 2.0;
  // psi*_2 = g_2 = (e, 1); psi*_1 = psi*_0 = E[g_2] = (e + 1) / 2 everywhere.
  CHECK(r.psi_star.log_psi(2, 0) == doctest::Approx(1.0));
  CHECK(r.psi_star.log_psi(2, 1) == doctest::Approx(0.0));
  for (Index x = 0; x < 2; ++x) {
    CHECK(r.psi_star.log_psi(1, x) == doctest::Approx(std::log(z)));
    CHECK(r.psi_star.log_psi(0, x) == doctest::Approx(std::log(z)));
  }
}

TEST_CASE("soft values satisfy the soft Bellman backup") {
  for (double alpha : {1.0, 0.5, 2.0}) {
    const FkModel m = random_model(31, 4, 4, true, alpha);
    const OptimalTwistResult r = backward_recursion(m);
    CHECK(soft_bellman_residual(m, r.soft_values, alpha) <= 1e-10);

    StepVectors perturbed = r.soft_values;
    perturbed[2][1] += 0.1;
    CHECK(soft_bellman_residual(m, perturbed, alpha) >= 0.05);
  }
}

TEST_CASE("zero variance under the optimal twist") {
  const FkModel m = random_model(55, 5, 5);
  REQUIRE(m.horizon() == 5);
  const OptimalTwistResult r = backward_recursion(m);
  const ZeroVarianceReport rep = zero_variance_check(m, r.psi_star, 1000, 1);
  CHECK(rep.n_samples == 1000);
  CHECK(rep.max_abs_dev_from_logZ < 1e-9);
  CHECK(rep.variance < 1e-9 * rep.mean * rep.mean);

  const ZeroVarianceReport base = zero_variance_check(m, TwistFunction::identity(m), 1000, 1);
  CHECK(base.max_abs_dev_from_logZ > 1e-3);
}

TEST_CASE("zero variance on the two-state model with sampled base weights") {
  const FkModel c1 = builtin_two_state();
  const ZeroVarianceReport rep = zero_variance_check(c1, TwistFunction::identity(c1), 20000, 4);
  // Base-measure weights are e or 1 with equal probability: variance (e - 1)^2 / 4.
  CHECK(rep.variance == doctest::Approx((kE - 1) * (kE - 1) / 4).epsilon(0.03));
  CHECK(rep.mean == doctest::Approx((kE + 1) / 2).epsilon(0.02));
}

TEST_CASE("masked toy optimal twist is the conditional expected exp-reward") {
  const int L = 3;
  const int V = 4;
  const FkModel m = builtin_masked_toy(L, V, 8);
  const OptimalTwistResult r = backward_recursion(m);
  const PathTable table = enumerate_paths(m);
  const VectorXd reward = m.potential_log(L);
  for (int t = 0; t <= L; ++t) {
    std::map<Index, std::pair<double, double>> acc;  // state -> (sum P e^r, sum P)
    for (std::size_t k = 0; k < table.paths.size(); ++k) {
      const double p = std::exp(table.base_log_probs[static_cast<Index>(k)]);
      auto& [num, den] = acc[table.paths[k][static_cast<std::size_t>(t)]];
      num += p * std::exp(reward[table.paths[k].states.back()]);
      den += p;
    }
    for (const auto& [x, nd] : acc) {
      CHECK(std::exp(r.psi_star.log_psi(t, x)) == doctest::Approx(nd.first / nd.second).epsilon(1e-12));
    }
  }
}
