#include "tritsmc/harness.hpp"

#include "tritsmc/builtins.hpp"
#include "tritsmc/optimal_twist.hpp"
#include "tritsmc/trust_region.hpp"

#include <algorithm>
#include <future>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace tritsmc {

namespace {

using io::json;

// Spread of residual log-weights below which the proposal already matches the target.
constexpr double kFlatLogWeights = 1e-9;

const char* kind_name(TwistKind k) { return k == TwistKind::tabular ? "tabular" : "log_linear"; }
const char* init_name(TwistInit i) {
  switch (i) {
    case TwistInit::identity: return "identity";
    case TwistInit::optimal: return "optimal";
    case TwistInit::file: return "file";
  }
  return "identity";
}
const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::adaptive ? "adaptive" : "gradient_descent"; }
const char* variant_name(PotentialVariant v) { return v == PotentialVariant::max ? "max" : "diff"; }

void reject_unknown(const json& doc, std::initializer_list<const char*> known, const std::string& where) {
  if (!doc.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> names(known.begin(), known.end());
  for (const auto& [key, _] : doc.items()) {
    if (!names.count(key)) throw ConfigError("unknown field '" + key + "' in " + where);
  }
}

template <typename T>
void read_if(const json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

void format_optional(std::ostream& os, const std::optional<double>& v) {
  if (v) os << *v;
}

VectorXd terminal_reward(const FkModel& model) { return model.alpha() * model.potential_log(model.horizon()); }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

std::vector<int> ExperimentConfig::schedule_for(int horizon) const {
  if (resample_steps) return normalize_schedule(*resample_steps, horizon);
  const int interval = resample_interval ? *resample_interval : std::max(1, (horizon + 4) / 5);
  return interval_schedule(horizon, interval);
}

void ExperimentConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (particles < 2) throw ConfigError("particles must be at least 2");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (tau_grid_points < 2) throw ConfigError("tau_grid must have at least 2 points");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (resample_interval && *resample_interval < 1) throw ConfigError("resample interval must be at least 1");
  if (init == TwistInit::file && init_file.empty()) throw ConfigError("twist init 'file' needs a path");
  if (features != "one_hot" && features != "index" && features != "explicit") {
    throw ConfigError("unknown feature map '" + features + "'");
  }
  fit.validate();
}

ExperimentConfig config_from_json(const json& doc) {
  reject_unknown(doc,
                 {"model", "twist", "particles", "iterations", "epsilon", "particle_mode", "schedule", "fit", "seed",
                  "threads", "path_cap", "evaluate_final", "out", "compare", "twist_file", "tau_grid"},
                 "config");
  ExperimentConfig c;
  try {
    if (doc.contains("model")) {
      const json& m = doc.at("model");
      reject_unknown(m, {"builtin", "file", "S", "T", "L", "V", "reward_spread", "seed"}, "model");
      if (m.contains("file")) {
        c.model.file = m.at("file").get<std::string>();
        c.model.builtin.clear();
      }
      read_if(m, "builtin", c.model.builtin);
      read_if(m, "S", c.model.S);
      read_if(m, "T", c.model.T);
      read_if(m, "L", c.model.L);
      read_if(m, "V", c.model.V);
      read_if(m, "reward_spread", c.model.reward_spread);
      read_if(m, "seed", c.model.seed);
    }
    if (doc.contains("twist")) {
      const json& t = doc.at("twist");
      reject_unknown(t, {"family", "features", "init", "file"}, "twist");
      const std::string family = t.value("family", std::string("tabular"));
      if (family == "tabular") {
        c.family = TwistKind::tabular;
      } else if (family == "log_linear") {
        c.family = TwistKind::log_linear;
      } else {
        throw ConfigError("unknown twist family '" + family + "'");
      }
      if (t.contains("features")) {
        const json& f = t.at("features");
        if (f.is_string()) {
          c.features = f.get<std::string>();
        } else {
          c.features = "explicit";
          for (const auto& m : f) c.explicit_features.push_back(io::matrix_from_json(m));
        }
      }
      const std::string init = t.value("init", std::string("identity"));
      if (init == "identity") {
        c.init = TwistInit::identity;
      } else if (init == "optimal") {
        c.init = TwistInit::optimal;
      } else if (init == "file") {
        c.init = TwistInit::file;
        c.init_file = t.value("file", std::string());
      } else {
        throw ConfigError("unknown twist init '" + init + "'");
      }
    }
    read_if(doc, "particles", c.particles);
    read_if(doc, "iterations", c.iterations);
    read_if(doc, "epsilon", c.epsilon);
    if (doc.contains("particle_mode")) {
      const auto mode = doc.at("particle_mode").get<std::string>();
      if (mode == "smc") {
        c.particle_mode = ParticleMode::smc;
      } else if (mode == "enumerate") {
        c.particle_mode = ParticleMode::enumerate;
      } else {
        throw ConfigError("unknown particle_mode '" + mode + "'");
      }
    }
    if (doc.contains("schedule")) {
      const json& s = doc.at("schedule");
      reject_unknown(s, {"interval", "steps"}, "schedule");
      if (s.contains("interval")) c.resample_interval = s.at("interval").get<int>();
      if (s.contains("steps")) c.resample_steps = s.at("steps").get<std::vector<int>>();
    }
    if (doc.contains("fit")) {
      const json& f = doc.at("fit");
      reject_unknown(f, {"step_size", "n_steps", "clip_norm", "optimizer", "tolerance", "max_backtracks"}, "fit");
      read_if(f, "step_size", c.fit.step_size);
      read_if(f, "n_steps", c.fit.n_steps);
      read_if(f, "clip_norm", c.fit.gradient_clip_norm);
      read_if(f, "tolerance", c.fit.tolerance);
      read_if(f, "max_backtracks", c.fit.max_backtracks);
      if (f.contains("optimizer")) {
        const auto opt = f.at("optimizer").get<std::string>();
        if (opt == "gradient_descent") {
          c.fit.optimizer = OptimizerKind::gradient_descent;
        } else if (opt == "adaptive") {
          c.fit.optimizer = OptimizerKind::adaptive;
        } else {
          throw ConfigError("unknown optimizer '" + opt + "'");
        }
      }
    }
    read_if(doc, "seed", c.seed);
    read_if(doc, "threads", c.threads);
    read_if(doc, "path_cap", c.path_cap);
    read_if(doc, "evaluate_final", c.evaluate_final);
    read_if(doc, "out", c.out_dir);
    read_if(doc, "twist_file", c.twist_file);
    read_if(doc, "tau_grid", c.tau_grid_points);
    if (doc.contains("compare")) {
      const json& cm = doc.at("compare");
      reject_unknown(cm, {"methods", "seeds", "matched_budget", "variant", "lambda"}, "compare");
      read_if(cm, "methods", c.compare.methods);
      read_if(cm, "seeds", c.compare.seeds);
      read_if(cm, "matched_budget", c.compare.matched_budget);
      read_if(cm, "lambda", c.compare.lambda_scale);
      if (cm.contains("variant")) {
        const auto v = cm.at("variant").get<std::string>();
        if (v == "diff") {
          c.compare.variant = PotentialVariant::diff;
        } else if (v == "max") {
          c.compare.variant = PotentialVariant::max;
        } else {
          throw ConfigError("unknown potential variant '" + v + "'");
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json doc;
  json m;
  if (!c.model.file.empty()) {
    m["file"] = c.model.file;
  } else {
    m["builtin"] = c.model.builtin;
    if (c.model.builtin == "chain") {
      m["S"] = c.model.S;
      m["T"] = c.model.T;
      m["reward_spread"] = c.model.reward_spread;
      m["seed"] = c.model.seed;
    } else if (c.model.builtin == "masked_toy") {
      m["L"] = c.model.L;
      m["V"] = c.model.V;
      m["reward_spread"] = c.model.reward_spread;
      m["seed"] = c.model.seed;
    }
  }
  doc["model"] = m;
  json t;
  t["family"] = kind_name(c.family);
  if (c.features == "explicit") {
    json feats = json::array();
    for (const auto& f : c.explicit_features) feats.push_back(io::matrix_to_json(f));
    t["features"] = feats;
  } else {
    t["features"] = c.features;
  }
  t["init"] = init_name(c.init);
  if (c.init == TwistInit::file) t["file"] = c.init_file;
  doc["twist"] = t;
  doc["particles"] = c.particles;
  doc["iterations"] = c.iterations;
  doc["epsilon"] = c.epsilon;
  doc["particle_mode"] = c.particle_mode == ParticleMode::smc ? "smc" : "enumerate";
  json s = json::object();
  if (c.resample_steps) s["steps"] = *c.resample_steps;
  if (c.resample_interval) s["interval"] = *c.resample_interval;
  doc["schedule"] = s;
  doc["fit"] = {{"step_size", c.fit.step_size},          {"n_steps", c.fit.n_steps},
                {"clip_norm", c.fit.gradient_clip_norm}, {"optimizer", optimizer_name(c.fit.optimizer)},
                {"tolerance", c.fit.tolerance},          {"max_backtracks", c.fit.max_backtracks}};
  doc["seed"] = c.seed;
  doc["threads"] = c.threads;
  doc["path_cap"] = c.path_cap;
  doc["evaluate_final"] = c.evaluate_final;
  doc["out"] = c.out_dir;
  doc["compare"] = {{"methods", c.compare.methods},
                    {"seeds", c.compare.seeds},
                    {"matched_budget", c.compare.matched_budget},
                    {"variant", variant_name(c.compare.variant)},
                    {"lambda", c.compare.lambda_scale}};
  if (!c.twist_file.empty()) doc["twist_file"] = c.twist_file;
  doc["tau_grid"] = c.tau_grid_points;
  return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return config_from_json(io::read_json_file(path)); }

FkModel build_model(const ModelSpec& spec) {
  if (!spec.file.empty()) return io::load_model(spec.file);
  if (spec.builtin == "two_state") return builtin_two_state();
  if (spec.builtin == "chain") return builtin_chain(spec.S, spec.T, spec.reward_spread, spec.seed);
  if (spec.builtin == "masked_toy") return builtin_masked_toy(spec.L, spec.V, spec.seed, spec.reward_spread);
  throw ConfigError("unknown builtin model '" + spec.builtin + "'");
}

TwistFunction initial_twist(const ExperimentConfig& config, const FkModel& model) {
  if (config.init == TwistInit::file) {
    TwistFunction tw = io::load_twist(config.init_file);
    tw.check_compatible(model);
    return tw;
  }
  const TwistFunction tab =
      config.init == TwistInit::optimal ? backward_recursion(model).psi_star : TwistFunction::identity(model);
  if (config.family == TwistKind::tabular) return tab;

  std::vector<MatrixXd> features;
  if (config.features == "one_hot") {
    features = one_hot_features(model);
  } else if (config.features == "index") {
    for (int t = 0; t <= model.horizon(); ++t) {
      const Index n = model.state_size(t);
      MatrixXd phi(n, 1);
      for (Index x = 0; x < n; ++x) phi(x, 0) = n > 1 ? static_cast<double>(x) / static_cast<double>(n - 1) : 0.0;
      features.push_back(std::move(phi));
    }
  } else {
    features = config.explicit_features;
  }
  if (features.size() != static_cast<std::size_t>(model.horizon() + 1)) {
    throw ConfigError("feature tables must cover steps 0..T");
  }
  StepVectors theta;
  for (int t = 0; t <= model.horizon(); ++t) {
    const MatrixXd& phi = features[static_cast<std::size_t>(t)];
    if (phi.rows() != model.state_size(t)) throw ConfigError("feature table rows must match state-space size");
    if (config.init == TwistInit::optimal) {
      // Least-squares fit of log psi*_t in the feature span.
      theta.emplace_back(phi.colPivHouseholderQr().solve(tab.log_psi_table(t)));
    } else {
      theta.emplace_back(VectorXd::Zero(phi.cols()));
    }
  }
  return TwistFunction::log_linear(std::move(theta), std::move(features));
}

TriTsmcResult tri_tsmc(const FkModel& model, const ExperimentConfig& config, std::optional<TwistFunction> theta0) {
  config.validate();
  std::vector<IterationMetrics> metrics;
  std::vector<std::vector<LossTraceRow>> fit_traces;
  std::vector<double> lambdas;
  std::optional<SmcOutput> last_smc;
  std::uint64_t sampled = 0;
  TwistParams params{theta0 ? *theta0 : initial_twist(config, model), 0};
  params.twist.check_compatible(model);

  const std::vector<int> schedule = config.schedule_for(model.horizon());
  const VectorXd reward = terminal_reward(model);
  const bool exact_available = supported_path_count(model) <= static_cast<double>(config.path_cap);
  double beta = 0.0;

  const int rows = config.iterations + (config.evaluate_final ? 1 : 0);
  for (int i = 0; i < rows; ++i) {
    const bool update = i < config.iterations;
    const TwistedModel tm(model, params.twist);
    IterationMetrics row;
    row.iteration = i;
    row.beta = beta;

    std::vector<Trajectory> trajectories;
    VectorXd log_weights;
    std::optional<VectorXd> log_masses;
    if (config.particle_mode == ParticleMode::smc) {
      SmcOptions opt;
      opt.num_particles = config.particles;
      opt.schedule = schedule;
      opt.seed = config.seed;
      opt.stream = static_cast<std::uint64_t>(i);
      opt.threads = config.threads;
      SmcOutput out = run_twisted_smc(tm, opt);
      row.log_Z_estimate = out.log_Z_estimate;
      row.ess = out.ess;
      row.ess_steps = out.ess_steps;
      row.weighted_reward = out.weighted_terminal_mean(reward);
      sampled += out.size();
      trajectories = out.trajectories;
      log_weights = out.residual_log_weights;
      last_smc = std::move(out);
    } else {
      PathPair pp = enumerate_proposal_and_target(model, params.twist, config.path_cap);
      log_weights = pp.log_target.array() + pp.log_Z - pp.log_proposal.array();
      const VectorXd w = normalize_log_weights(VectorXd(pp.log_proposal + log_weights));
      row.log_Z_estimate = pp.log_Z;
      row.ess = {ess(w)};
      row.ess_steps = {model.horizon()};
      double r = 0.0;
      for (std::size_t k = 0; k < pp.paths.size(); ++k) r += w[static_cast<Index>(k)] * reward[pp.paths[k].states.back()];
      row.weighted_reward = r;
      trajectories = std::move(pp.paths);
      log_masses = pp.log_proposal;
    }

    if (exact_available) {
      const ProposalDivergences d = proposal_divergences(model, params.twist);
      row.kl_to_target = d.kl_to_target;
      row.chi2_to_target = d.chi2_to_target;
    }

    if (update) {
      const TrustRegionResult dual =
          log_masses ? solve_dual(log_weights, config.epsilon, *log_masses) : solve_dual(log_weights, config.epsilon);
      row.lambda_hat = dual.lambda_hat;
      row.tau_hat = dual.tau_hat;
      lambdas.push_back(dual.lambda_hat);
      beta = annealing_beta_sequence(lambdas).back();

      std::optional<FitResult> fit;
      if (log_weights.maxCoeff() - log_weights.minCoeff() <= kFlatLogWeights) {
        // Flat weights: the tempered target is the current proposal, whose
        // projection is the current twist. Refitting would only chase noise.
        const double loss = weighted_mle_loss(params, trajectories, dual.tempered_weights, model);
        const double gnorm = gradient_norm(loss_gradient(params, trajectories, dual.tempered_weights, model));
        fit.emplace(FitResult{params, {{0, loss, gnorm, 0.0}}});
      } else {
        try {
          fit.emplace(fit_twist(params, trajectories, dual.tempered_weights, model, config.fit));
        } catch (const DivergenceError& e) {
          throw DivergenceError("iteration " + std::to_string(i) + ": " + e.what());
        }
      }
      row.fit_initial_loss = fit->trace.front().loss;
      row.fit_final_loss = fit->trace.back().loss;
      row.fit_steps = fit->trace.back().step;
      params = std::move(fit->params);
      fit_traces.push_back(std::move(fit->trace));
    }
    metrics.push_back(std::move(row));
  }
  return TriTsmcResult{std::move(params), std::move(metrics), std::move(fit_traces), std::move(lambdas),
                       std::move(last_smc), sampled};
}

TriTsmcResult tri_tsmc(const ExperimentConfig& config) { return tri_tsmc(build_model(config.model), config); }

std::vector<MethodSummary> compare_methods(const FkModel& model, const ExperimentConfig& config,
                                           std::optional<TwistFunction> theta0) {
  config.validate();
  const auto& methods = config.compare.methods;
  for (const auto& m : methods) {
    if (m != "base" && m != "best_of_n" && m != "potential_smc" && m != "tri_tsmc") {
      throw ConfigError("unknown method '" + m + "'");
    }
  }
  if (config.compare.seeds < 1) throw ConfigError("compare needs at least one seed");

  const std::size_t K = config.particles;
  const std::size_t baseline_budget = config.compare.matched_budget ? K * static_cast<std::size_t>(config.iterations) : K;
  const std::vector<int> schedule = config.schedule_for(model.horizon());
  const VectorXd reward = terminal_reward(model);
  const StepVectors reward_estimates = expected_terminal_reward(model);

  struct Cell {
    double reward = 0.0;
    std::optional<double> ess;
    std::optional<double> log_Z;
    std::uint64_t states = 0;
  };

  auto run_cell = [&](const std::string& method, std::size_t s) -> Cell {
    const std::uint64_t seed = CounterRng(config.seed, {0xC0DEULL, s}).next_u64();
    SmcOptions opt;
    opt.num_particles = baseline_budget;
    opt.seed = seed;
    opt.threads = 1;
    Cell cell;
    if (method == "base") {
      const SmcOutput out = run_twisted_smc(model, TwistFunction::identity(model), opt);
      double r = 0.0;
      for (const auto& traj : out.trajectories) r += reward[traj.states.back()];
      cell.reward = r / static_cast<double>(out.size());
      cell.ess = out.ess.back();
      cell.log_Z = out.log_Z_estimate;
      cell.states = out.states_sampled;
    } else if (method == "best_of_n") {
      const BestOfN best = best_of_n(model, baseline_budget, seed);
      cell.reward = reward[best.trajectory.states.back()];
      cell.states = baseline_budget * static_cast<std::uint64_t>(model.horizon() + 1);
    } else if (method == "potential_smc") {
      opt.schedule = schedule;
      const SmcOutput out = potential_smc_baseline(model, reward_estimates, config.compare.variant,
                                                   config.compare.lambda_scale, opt);
      cell.reward = out.weighted_terminal_mean(reward);
      cell.ess = out.ess.back();
      cell.log_Z = out.log_Z_estimate;
      cell.states = out.states_sampled;
    } else {
      ExperimentConfig sub = config;
      sub.seed = seed;
      sub.threads = 1;
      sub.evaluate_final = false;
      sub.particle_mode = ParticleMode::smc;
      const TriTsmcResult res = tri_tsmc(model, sub, theta0);
      const IterationMetrics& last = res.metrics.back();
      cell.reward = last.weighted_reward;
      cell.ess = last.final_ess();
      cell.log_Z = last.log_Z_estimate;
      cell.states = res.trajectories_sampled * static_cast<std::uint64_t>(model.horizon() + 1);
    }
    return cell;
  };

  const std::size_t S = config.compare.seeds;
  std::vector<Cell> cells(methods.size() * S);
  if (config.threads > 1) {
    std::vector<std::future<Cell>> futures;
    for (std::size_t m = 0; m < methods.size(); ++m) {
      for (std::size_t s = 0; s < S; ++s) futures.push_back(std::async(std::launch::async, run_cell, methods[m], s));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) cells[i] = futures[i].get();
  } else {
    for (std::size_t m = 0; m < methods.size(); ++m) {
      for (std::size_t s = 0; s < S; ++s) cells[m * S + s] = run_cell(methods[m], s);
    }
  }

  std::vector<MethodSummary> out;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    MethodSummary row;
    row.method = methods[m];
    row.budget = methods[m] == "tri_tsmc" ? K * static_cast<std::size_t>(config.iterations) : baseline_budget;
    row.seeds = S;
    std::vector<double> rewards, esses, log_zs;
    for (std::size_t s = 0; s < S; ++s) {
      const Cell& c = cells[m * S + s];
      rewards.push_back(c.reward);
      if (c.ess) esses.push_back(*c.ess);
      if (c.log_Z) log_zs.push_back(*c.log_Z);
      row.states_sampled += c.states;
    }
    row.mean_reward = mean_of(rewards);
    row.reward_se = std::sqrt(sample_variance(rewards) / static_cast<double>(S));
    if (!esses.empty()) row.mean_ess = mean_of(esses);
    if (!log_zs.empty()) {
      row.log_Z_mean = mean_of(log_zs);
      row.log_Z_var = sample_variance(log_zs);
    }
    out.push_back(std::move(row));
  }
  return out;
}

void write_config_header(std::ostream& os, const ExperimentConfig& config) {
  os << "# config: " << config_to_json(config).dump() << '\n';
}

void write_metrics_table(std::ostream& os, const std::vector<IterationMetrics>& rows) {
  const auto old_precision = os.precision(17);
  os << "iteration\tlog_Z_estimate\tfinal_ess\tess_by_stage\tlambda_hat\ttau_hat\tbeta\tkl_to_target\t"
        "chi2_to_target\tweighted_reward\tfit_initial_loss\tfit_final_loss\tfit_steps\n";
  for (const auto& r : rows) {
    os << r.iteration << '\t' << r.log_Z_estimate << '\t' << r.final_ess() << '\t';
    for (std::size_t j = 0; j < r.ess.size(); ++j) os << (j ? ";" : "") << r.ess_steps[j] << ':' << r.ess[j];
    os << '\t';
    format_optional(os, r.lambda_hat);
    os << '\t';
    format_optional(os, r.tau_hat);
    os << '\t' << r.beta << '\t';
    format_optional(os, r.kl_to_target);
    os << '\t';
    format_optional(os, r.chi2_to_target);
    os << '\t' << r.weighted_reward << '\t';
    format_optional(os, r.fit_initial_loss);
    os << '\t';
    format_optional(os, r.fit_final_loss);
    os << '\t';
    if (r.fit_steps) os << *r.fit_steps;
    os << '\n';
  }
  os.precision(old_precision);
}

void write_comparison_table(std::ostream& os, const std::vector<MethodSummary>& rows) {
  const auto old_precision = os.precision(17);
  os << "method\tbudget\tseeds\tmean_reward\treward_se\tmean_ess\tlog_Z_mean\tlog_Z_var\tstates_sampled\n";
  for (const auto& r : rows) {
    os << r.method << '\t' << r.budget << '\t' << r.seeds << '\t' << r.mean_reward << '\t' << r.reward_se << '\t';
    format_optional(os, r.mean_ess);
    os << '\t';
    format_optional(os, r.log_Z_mean);
    os << '\t';
    format_optional(os, r.log_Z_var);
    os << '\t' << r.states_sampled << '\n';
  }
  os.precision(old_precision);
}

}  // namespace tritsmc
