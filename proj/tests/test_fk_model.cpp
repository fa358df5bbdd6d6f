#include "support.hpp"

#include "tritsmc/builtins.hpp"
#include "tritsmc/fk_model.hpp"
#include "tritsmc/rng.hpp"

#include <doctest.h>

#include <array>

using namespace tritsmc;
using namespace testing;

TEST_CASE("two-state model partition function") {
  const FkModel c1 = builtin_two_state();
  CHECK(c1.horizon() == 2);
  CHECK(std::abs(exact_log_Z(c1) - kC1LogZ) < 1e-12);
  CHECK(std::abs(enumerate_target(c1).log_Z - kC1LogZ) < 1e-12);
}

TEST_CASE("backward DP agrees with brute force") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const FkModel m = random_model(s, 3, 4, s % 2 == 1);
    CHECK(std::abs(exact_log_Z(m) - brute_log_Z(m)) < 1e-12);
    CHECK(std::abs(enumerate_target(m).log_Z - brute_log_Z(m)) < 1e-12);
  }
}

TEST_CASE("enumeration visits exactly the supported paths in order") {
  const FkModel m = random_model(42, 3, 4, true);
  std::vector<Trajectory> expected;
  for (const auto& x : all_tuples(m)) {
    if (std::isfinite(brute_base_log(m, x))) expected.push_back(x);
  }
  const PathTable table = enumerate_paths(m);
  REQUIRE(table.paths.size() == expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    CHECK(table.paths[k] == expected[k]);
    CHECK(table.base_log_probs[static_cast<Index>(k)] == doctest::Approx(brute_base_log(m, expected[k])).epsilon(1e-12));
  }
  CHECK(std::is_sorted(table.paths.begin(), table.paths.end()));
  CHECK(std::abs(std::exp(log_sum_exp(table.base_log_probs)) - 1.0) < 1e-12);
}

TEST_CASE("target oracle lookup") {
  const FkModel m = random_model(3, 2, 3, true);
  const ExactOracle oracle = enumerate_target(m);
  CHECK(std::abs(std::exp(log_sum_exp(oracle.target_log_probs)) - 1.0) < 1e-12);
  for (const auto& x : all_tuples(m)) {
    const double expected = brute_log_gamma(m, x) - brute_log_Z(m);
    if (std::isfinite(expected)) {
      CHECK(oracle.log_prob(x) == doctest::Approx(expected).epsilon(1e-12));
    } else {
      CHECK(oracle.log_prob(x) == kNegInf);
    }
  }
}

TEST_CASE("enumeration cap") {
  const FkModel m = random_model(1, 3, 4);
  CHECK_THROWS_AS(enumerate_paths(m, 3), CapacityError);
  CHECK_NOTHROW(enumerate_paths(m, m.path_count_bound()));
}

TEST_CASE("model validation") {
  const VectorXd mu = VectorXd::Constant(2, std::log(0.5));
  MatrixXd f = MatrixXd::Constant(2, 2, std::log(0.5));
  const StepVectors g{VectorXd::Zero(2), VectorXd::Zero(2)};
  CHECK_NOTHROW(FkModel(mu, {f}, g));

  MatrixXd bad = f;
  bad(0, 0) = std::log(0.6);
  CHECK_THROWS_AS(FkModel(mu, {bad}, g), DomainError);
  CHECK_THROWS_AS(FkModel(mu, {MatrixXd::Constant(2, 3, std::log(1.0 / 3))}, g), ShapeError);
  CHECK_THROWS_AS(FkModel(mu, {}, {VectorXd::Zero(2)}), ShapeError);
  StepVectors g_inf = g;
  g_inf[1][0] = kNegInf;
  CHECK_THROWS_AS(FkModel(mu, {f}, g_inf), DomainError);
  CHECK_THROWS_AS(FkModel(mu, {f}, g, -1.0), DomainError);

  const FkModel m(mu, {f}, g);
  CHECK_THROWS_AS(m.validate(Trajectory{{0}}), InvalidTrajectoryError);
  CHECK_THROWS_AS(m.validate(Trajectory{{0, 2}}), InvalidTrajectoryError);
  CHECK_NOTHROW(m.validate(Trajectory{{1, 1}}));
}

TEST_CASE("terminal reward potentials") {
  const FkModel c1 = builtin_two_state();
  CHECK(c1.potential_log(0).isZero());
  CHECK(c1.potential_log(1).isZero());
  CHECK(c1.potential_log(2)[0] == doctest::Approx(1.0));
  CHECK(c1.potential_log(2)[1] == 0.0);
  // alpha scales the reward inside the potential: g_T = exp(r / alpha).
  const FkModel half = from_terminal_reward(c1, VectorXd::Ones(2), 0.5);
  CHECK(half.potential_log(2)[0] == doctest::Approx(2.0));
}

TEST_CASE("categorical draws follow their probabilities") {
  const std::array<double, 2> probs{0.75, 0.25};
  CounterRng rng(11);
  int zeros = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) zeros += sample_categorical(probs, rng.uniform()) == 0;
  const double freq = static_cast<double>(zeros) / n;
  CHECK(freq >= 0.737);
  CHECK(freq <= 0.763);

  const std::array<double, 3> with_hole{0.5, 0.0, 0.5};
  for (int i = 0; i < 1000; ++i) CHECK(sample_categorical(with_hole, rng.uniform()) != 1);
}

TEST_CASE("counter RNG streams depend only on key and position") {
  CounterRng a(5, {1, 2, 3});
  CounterRng b(5, {1, 2, 3});
  CounterRng c(5, {1, 2, 4});
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  CounterRng d = CounterRng(5, {1}).split({2, 3});
  CHECK(d.next_u64() == CounterRng(5, {1, 2, 3}).next_u64());
  // Frozen value guards against accidental changes to the mixing function.
  CHECK(CounterRng::mix64(0) == 0);
  CHECK(CounterRng::mix64(1) == 0x5692161D100B05E5ULL);
  // First output of reference SplitMix64 seeded with 0.
  CHECK(CounterRng::mix64(0x9E3779B97F4A7C15ULL) == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("base path sampling matches base probabilities") {
  const FkModel c1 = builtin_two_state();
  CounterRng rng(3);
  std::array<int, 8> counts{};
  const int n = 16000;
  for (int i = 0; i < n; ++i) {
    const Trajectory x = sample_base_path(c1, rng);
    counts[static_cast<std::size_t>(x[0] * 4 + x[1] * 2 + x[2])]++;
  }
  for (int c : counts) CHECK(std::abs(c / static_cast<double>(n) - 0.125) < 4 * std::sqrt(0.125 * 0.875 / n));
}
