#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "varislip/io.hpp"
#include "varislip/scenario.hpp"

using namespace varislip;

namespace {

std::string default_output_root() {
  const char* env = std::getenv("VARISLIP_OUTPUT_DIR");
  return env ? std::string(env) : std::string("runs");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

SimulationConfig load_config(const std::string& config_path, const std::string& scenario,
                             int steps_override, long seed_override) {
  SimulationConfig cfg;
  if (!config_path.empty()) {
    cfg = SimulationConfig::load(config_path);
  } else if (!scenario.empty()) {
    cfg = SimulationConfig::parse("scenario = " + scenario + "\n");
  } else {
    throw ValidationError("run: provide --config PATH or --scenario NAME");
  }
  if (!scenario.empty() && !config_path.empty())
    throw ValidationError("run: --config and --scenario are mutually exclusive");
  if (seed_override >= 0) cfg.set("seed", std::to_string(seed_override));
  if (steps_override > 0) {
    const double tau = cfg.get_double("step.tau");
    cfg.set_double("step.t_end", steps_override * tau);
  }
  cfg.validate();
  return cfg;
}

int run_with_config(const SimulationConfig& cfg, const std::string& dir,
                    const std::string& check) {
  const ScenarioSetup setup = build_scenario(cfg);

  if (setup.is_transport) {
    const TransportReport tr = check_transport(setup.transport);
    write_transport_outputs(tr, cfg, dir);
    std::cout << "transport check: rate error " << tr.max_rel_error_vs_analytic
              << ", quotient error " << tr.max_rel_error_quotient << "\n";
    std::cout << "outputs written to " << dir << "\n";
    return (tr.max_rel_error_vs_analytic < 0.02 && tr.max_rel_error_quotient < 0.02) ? 0 : 2;
  }

  const Trajectory traj = run_simulation(setup.cfg, setup.models, setup.init);
  const VerificationReport report = run_verification(traj, split_list(check));
  write_outputs(traj, report, cfg, dir);

  std::cout << "steps completed: " << traj.steps_completed() << "\n";
  if (traj.abort != AbortReason::None)
    std::cout << "run ended early: " << traj.abort_message << "\n";
  std::cout << report.to_text();
  std::cout << "outputs written to " << dir << "\n";

  if (traj.abort == AbortReason::StepFailure || traj.abort == AbortReason::SelfIntersection) {
    std::cerr << "error: " << traj.abort_message << "\n";
    return 1;
  }
  if (!report.all_pass()) {
    for (const auto& c : report.checks)
      if (!c.pass) std::cerr << "verification failed: " << c.name << "\n";
    return 2;
  }
  return 0;
}

int run_command(const std::string& config_path, const std::string& scenario,
                const std::string& output, int steps, long seed, const std::string& check) {
  SimulationConfig cfg = load_config(config_path, scenario, steps, seed);
  const std::string dir =
      output.empty() ? default_output_root() + "/" + cfg.scenario() : output;
  return run_with_config(cfg, dir, check);
}

int verify_command(const std::string& dir, const std::string& check) {
  const VerificationReport rep = verify_run_directory(dir, split_list(check));
  std::cout << rep.to_text();
  if (!rep.all_pass()) {
    for (const auto& c : rep.checks)
      if (!c.pass) std::cerr << "verification failed: " << c.name << "\n";
    return 2;
  }
  return 0;
}

int sweep_command(const std::string& config_path, const std::string& scenario,
                  const std::string& output, const std::vector<std::string>& grids,
                  const std::string& check) {
  SimulationConfig base = load_config(config_path, scenario, 0, -1);
  // cartesian grid over 'key=v1,v2,...' specs
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& g : grids) {
    const size_t eq = g.find('=');
    if (eq == std::string::npos) throw ValidationError("sweep: expected key=v1,v2,...");
    axes.emplace_back(g.substr(0, eq), split_list(g.substr(eq + 1)));
  }
  const std::string root = output.empty() ? default_output_root() + "/sweep" : output;

  std::vector<size_t> idx(axes.size(), 0);
  int rc = 0;
  while (true) {
    SimulationConfig cfg = base;
    std::string tag;
    for (size_t a = 0; a < axes.size(); ++a) {
      cfg.set(axes[a].first, axes[a].second[idx[a]]);
      tag += (a ? "_" : "") + axes[a].first + "-" + axes[a].second[idx[a]];
    }
    for (char& c : tag)
      if (c == '.' || c == '/') c = '_';
    cfg.validate();
    std::cout << "sweep point: " << tag << "\n";
    const int r = run_with_config(cfg, root + "/" + tag, check);
    if (r != 0) rc = r;
    size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational fluid-structure interaction stepper"};
  app.require_subcommand(1);

  std::string config_path, scenario, output, check = "all";
  int steps = 0;
  long seed = -1;
  std::vector<std::string> grids;

  auto* run = app.add_subcommand("run", "run a simulation");
  run->add_option("--config", config_path, "config file path");
  run->add_option("--scenario", scenario, "built-in scenario name (instead of --config)");
  run->add_option("--output", output, "output directory");
  run->add_option("--steps", steps, "override the number of steps");
  run->add_option("--seed", seed, "override the random seed");
  run->add_option("--check", check, "checks to run: all|energy|coupling|transport|flowmap");

  auto* verify = app.add_subcommand("verify", "re-run diagnostics on stored outputs");
  verify->add_option("--output", output, "run directory to verify")->required();
  verify->add_option("--check", check, "checks to run");

  auto* sweep = app.add_subcommand("sweep", "parameter grid of runs");
  sweep->add_option("--config", config_path, "config file path");
  sweep->add_option("--scenario", scenario, "built-in scenario name");
  sweep->add_option("--output", output, "output root directory");
  sweep->add_option("--grid", grids, "grid axis, e.g. step.tau=1e-3,5e-4")->required();
  sweep->add_option("--check", check, "checks to run");

  auto* scen = app.add_subcommand("scenarios", "list built-in scenarios");

  CLI11_PARSE(app, argc, argv);

  try {
    if (scen->parsed()) {
      for (const auto& n : scenario_names()) std::cout << n << "\n";
      return 0;
    }
    if (run->parsed()) return run_command(config_path, scenario, output, steps, seed, check);
    if (verify->parsed()) return verify_command(output, check);
    if (sweep->parsed()) return sweep_command(config_path, scenario, output, grids, check);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
