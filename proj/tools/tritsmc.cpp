// Command-line front end: run, compare, oracle, diagnose.

#include "tritsmc/harness.hpp"
#include "tritsmc/optimal_twist.hpp"
#include "tritsmc/trust_region.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace tritsmc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::uint64_t> path_cap;
  std::optional<std::string> twist;
};

ExperimentConfig resolve(const Options& opt) {
  ExperimentConfig c = opt.config.empty() ? ExperimentConfig{} : load_config(opt.config);
  if (opt.seed) c.seed = *opt.seed;
  if (opt.out) c.out_dir = *opt.out;
  if (opt.path_cap) c.path_cap = *opt.path_cap;
  if (opt.twist) c.twist_file = *opt.twist;
  c.validate();
  return c;
}

std::ofstream open_table(const ExperimentConfig& c, const std::string& name) {
  fs::create_directories(c.out_dir);
  const fs::path path = fs::path(c.out_dir) / name;
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  write_config_header(os, c);
  return os;
}

void cmd_run(const ExperimentConfig& c) {
  const FkModel model = build_model(c.model);
  const TriTsmcResult res = tri_tsmc(model, c);
  {
    auto os = open_table(c, "metrics.tsv");
    write_metrics_table(os, res.metrics);
  }
  {
    auto os = open_table(c, "fit_trace.tsv");
    for (std::size_t i = 0; i < res.fit_traces.size(); ++i) {
      os << "# iteration " << i << '\n';
      write_loss_trace(os, res.fit_traces[i]);
    }
  }
  if (res.last_smc) {
    auto os = open_table(c, "particles.tsv");
    write_smc_table(os, *res.last_smc);
  }
  io::save_twist(fs::path(c.out_dir) / "twist.json", res.final_params.twist);
  std::cout << "wrote " << res.metrics.size() << " metric rows to " << c.out_dir << '\n';
}

void cmd_compare(const ExperimentConfig& c) {
  const FkModel model = build_model(c.model);
  std::optional<TwistFunction> theta0;
  if (!c.twist_file.empty()) theta0 = io::load_twist(c.twist_file);
  const auto rows = compare_methods(model, c, theta0);
  auto os = open_table(c, "comparison.tsv");
  write_comparison_table(os, rows);
  std::cout << "wrote " << rows.size() << " method rows to " << c.out_dir << '\n';
}

void cmd_oracle(const ExperimentConfig& c) {
  const FkModel model = build_model(c.model);
  const OptimalTwistResult opt = backward_recursion(model);
  fs::create_directories(c.out_dir);
  io::save_twist(fs::path(c.out_dir) / "psi_star.json", opt.psi_star);
  {
    auto os = open_table(c, "oracle.tsv");
    os.precision(17);
    os << "quantity\tvalue\n";
    os << "log_Z_recursion\t" << opt.log_Z_from_recursion << '\n';
    os << "log_Z_dp\t" << exact_log_Z(model) << '\n';
    os << "supported_paths\t" << supported_path_count(model) << '\n';
    if (supported_path_count(model) <= static_cast<double>(c.path_cap)) {
      os << "log_Z_enumerated\t" << enumerate_target(model, c.path_cap).log_Z << '\n';
    }
  }
  const auto taus = uniform_tau_grid(c.tau_grid_points);
  auto os = open_table(c, "escort.tsv");
  write_escort_table(os, escort_diagnostics(model, TwistFunction::identity(model), taus, c.path_cap));
  std::cout << "log Z = " << opt.log_Z_from_recursion << '\n';
}

void cmd_diagnose(const ExperimentConfig& c) {
  const FkModel model = build_model(c.model);
  TwistFunction twist = c.twist_file.empty() ? initial_twist(c, model) : io::load_twist(c.twist_file);
  twist.check_compatible(model);
  const auto taus = uniform_tau_grid(c.tau_grid_points);
  {
    auto os = open_table(c, "escort.tsv");
    write_escort_table(os, escort_diagnostics(model, twist, taus, c.path_cap));
  }
  auto os = open_table(c, "chi2.tsv");
  os.precision(17);
  os << "tau\tvariance_ratio\tchi2\tabs_diff\n";
  for (double tau : taus) {
    const Chi2Check chk = chi2_variance_identity_check(model, twist, tau, c.path_cap);
    os << tau << '\t' << chk.lhs << '\t' << chk.rhs << '\t' << chk.abs_diff << '\n';
  }
  std::cout << "wrote escort and chi-square tables to " << c.out_dir << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trust-region iterative twisted SMC with exact oracles"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opt.config, "experiment config (JSON)");
    if (needs_config) c->required();
    sub->add_option("--seed", opt.seed, "overrides the config seed");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--path-cap", opt.path_cap, "enumeration cap on supported paths");
  };
  auto* run = app.add_subcommand("run", "TRI-TSMC from a config file");
  auto* compare = app.add_subcommand("compare", "method comparison table");
  auto* oracle = app.add_subcommand("oracle", "psi*, exact log Z and escort curves");
  auto* diagnose = app.add_subcommand("diagnose", "escort and chi-square tables for a model and twist");
  add_common(run, true);
  add_common(compare, true);
  add_common(oracle, false);
  add_common(diagnose, false);
  compare->add_option("--twist", opt.twist, "twist file used as the TRI-TSMC initialization");
  diagnose->add_option("--twist", opt.twist, "twist file (default: the configured initial twist)");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig c = resolve(opt);
    if (*run) cmd_run(c);
    if (*compare) cmd_compare(c);
    if (*oracle) cmd_oracle(c);
    if (*diagnose) cmd_diagnose(c);
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const DomainError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const DegeneracyError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const io::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
