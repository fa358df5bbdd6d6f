#ifndef TRITSMC_HARNESS_HPP
#define TRITSMC_HARNESS_HPP

#include "tritsmc/fk_model.hpp"
#include "tritsmc/io.hpp"
#include "tritsmc/smc.hpp"
#include "tritsmc/twist.hpp"
#include "tritsmc/twist_learn.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tritsmc {

struct ModelSpec {
  /// "two_state", "chain", "masked_toy", or empty when `file` is set.
  std::string builtin = "two_state";
  std::string file;
  int S = 6;
  int T = 6;
  int L = 3;
  int V = 4;
  double reward_spread = 3.0;
  std::uint64_t seed = 0;
};

enum class TwistInit { identity, optimal, file };

/// How each outer iteration obtains its weighted trajectories.
enum class ParticleMode {
  smc,        ///< run the twisted particle system
  enumerate,  ///< every supported path, carrying its exact proposal mass
};

struct CompareSpec {
  std::vector<std::string> methods{"base", "best_of_n", "potential_smc", "tri_tsmc"};
  std::size_t seeds = 10;
  bool matched_budget = true;
  PotentialVariant variant = PotentialVariant::diff;
  double lambda_scale = 1.0;
};

struct ExperimentConfig {
  ModelSpec model;
  TwistKind family = TwistKind::tabular;
  /// "one_hot", "index" (a single feature x / (S_t - 1)), or "explicit".
  std::string features = "one_hot";
  std::vector<MatrixXd> explicit_features;
  TwistInit init = TwistInit::identity;
  std::string init_file;

  std::size_t particles = 64;
  int iterations = 5;
  double epsilon = 0.2;
  ParticleMode particle_mode = ParticleMode::smc;
  std::optional<int> resample_interval;
  std::optional<std::vector<int>> resample_steps;
  FitConfig fit;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::uint64_t path_cap = kDefaultPathCap;
  /// Adds a row i = I that samples and scores the final twist.
  bool evaluate_final = true;
  std::string out_dir = "out";

  CompareSpec compare;
  std::string twist_file;
  std::size_t tau_grid_points = 21;

  /// Explicit steps, else every `resample_interval`, else every ceil(T/5).
  [[nodiscard]] std::vector<int> schedule_for(int horizon) const;
  void validate() const;
};

ExperimentConfig config_from_json(const io::json& doc);
/// Fully resolved config, defaults included.
io::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

FkModel build_model(const ModelSpec& spec);
/// theta_0 for the configured family and init.
TwistFunction initial_twist(const ExperimentConfig& config, const FkModel& model);

struct IterationMetrics {
  int iteration = 0;
  double log_Z_estimate = 0.0;
  std::vector<double> ess;
  std::vector<int> ess_steps;
  std::optional<double> lambda_hat;
  std::optional<double> tau_hat;
  double beta = 0.0;
  std::optional<double> kl_to_target;
  std::optional<double> chi2_to_target;
  double weighted_reward = 0.0;
  std::optional<double> fit_initial_loss;
  std::optional<double> fit_final_loss;
  std::optional<int> fit_steps;

  [[nodiscard]] double final_ess() const { return ess.empty() ? 0.0 : ess.back(); }
};

struct TriTsmcResult {
  TwistParams final_params;
  std::vector<IterationMetrics> metrics;
  std::vector<std::vector<LossTraceRow>> fit_traces;
  std::vector<double> lambdas;
  std::optional<SmcOutput> last_smc;
  /// Trajectories drawn by the particle system over all rows.
  std::uint64_t trajectories_sampled = 0;
};

/// The outer loop: sample under psi(theta_i), weigh, solve the dual, temper,
/// refit from theta_i. Exact KL / chi-square columns are filled only when
/// the model enumerates under the path cap.
TriTsmcResult tri_tsmc(const FkModel& model, const ExperimentConfig& config,
                       std::optional<TwistFunction> theta0 = std::nullopt);
TriTsmcResult tri_tsmc(const ExperimentConfig& config);

struct MethodSummary {
  std::string method;
  std::size_t budget = 0;  ///< trajectories per seed
  std::size_t seeds = 0;
  double mean_reward = 0.0;
  double reward_se = 0.0;
  std::optional<double> mean_ess;
  std::optional<double> log_Z_mean;
  std::optional<double> log_Z_var;
  std::uint64_t states_sampled = 0;  ///< summed over seeds
};

/// Runs each method over `compare.seeds` seeds. With a matched budget the
/// baselines receive K * I trajectories, the trajectory budget of TRI-TSMC.
std::vector<MethodSummary> compare_methods(const FkModel& model, const ExperimentConfig& config,
                                           std::optional<TwistFunction> theta0 = std::nullopt);

void write_metrics_table(std::ostream& os, const std::vector<IterationMetrics>& rows);
void write_comparison_table(std::ostream& os, const std::vector<MethodSummary>& rows);

/// "# config: {...}" line.
void write_config_header(std::ostream& os, const ExperimentConfig& config);

}  // namespace tritsmc

#endif  // TRITSMC_HARNESS_HPP
