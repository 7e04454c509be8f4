// Command-line front end: simulate, converge, probe-uniqueness, sweep, verify.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kheat/errors.hpp"
#include "kheat/runner.hpp"

namespace {

using namespace kheat;

std::vector<std::size_t> parse_modes(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    long long n = 0;
    try {
      n = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || n <= 0) {
      throw ConfigError("--modes", "expected positive integers, got '" + item + "'");
    }
    out.push_back(static_cast<std::size_t>(n));
  }
  return out;
}

// Wraps a subcommand body with the stable exit-code contract.
template <class Body>
int guarded(Body body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const SolverDivergence& e) {
    std::cerr << "solver divergence: " << e.what() << '\n';
    return exit_code::solver_divergence;
  } catch (const NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << '\n';
    return exit_code::solver_divergence;
  }
}

std::filesystem::path out_path(const ScenarioConfig& config, const std::string& suffix) {
  const std::filesystem::path dir = output_directory(config);
  std::filesystem::create_directories(dir);
  return dir / (config.name + suffix);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral Galerkin simulator for the coupled Kirchhoff-heat system"};
  app.require_subcommand(1);

  std::string config_path;
  std::string modes = "8,16,32";
  double eps = 1e-5;
  std::string grid_path;

  auto* sim = app.add_subcommand("simulate", "Run a scenario and write trajectory CSV + diagnostics JSON");
  sim->add_option("config", config_path, "Scenario JSON")->required();

  auto* conv = app.add_subcommand("converge", "Galerkin truncation convergence study");
  conv->add_option("config", config_path, "Scenario JSON")->required();
  conv->add_option("--modes", modes, "Strictly increasing mode counts, comma separated");

  auto* probe = app.add_subcommand("probe-uniqueness", "Compare a run against a perturbed initial displacement");
  probe->add_option("config", config_path, "Scenario JSON")->required();
  probe->add_option("--eps", eps, "Perturbation size along the first mode");

  auto* sw = app.add_subcommand("sweep", "Parameter sweep with decay-rate fits");
  sw->add_option("config", config_path, "Base scenario JSON")->required();
  sw->add_option("grid", grid_path, "Grid JSON {m1, alpha, beta, n_modes, scales}")->required();

  auto* ver = app.add_subcommand("verify", "Run the invariant suite and print pass/fail per check");
  ver->add_option("config", config_path, "Scenario JSON")->required();

  CLI11_PARSE(app, argc, argv);

  if (*sim) {
    return guarded([&] { return run_scenario(load_config(config_path), std::cout); });
  }

  if (*conv) {
    return guarded([&] {
      const ScenarioConfig config = load_config(config_path);
      const auto rows = convergence_study(config, parse_modes(modes));
      const auto path = out_path(config, "_convergence.csv");
      std::ofstream csv(path);
      csv << "n_coarse,n_fine,energy_discrepancy,terminal_discrepancy\n";
      csv.precision(17);
      std::cout << "N -> N'      max|E_N - E_N'|     terminal modal discrepancy\n";
      for (const auto& r : rows) {
        csv << r.n_coarse << ',' << r.n_fine << ',' << r.energy_discrepancy << ',' << r.terminal_discrepancy << '\n';
        std::cout << r.n_coarse << " -> " << r.n_fine << "   " << r.energy_discrepancy << "   "
                  << r.terminal_discrepancy << '\n';
      }
      std::cout << "wrote " << path.string() << '\n';
      return exit_code::ok;
    });
  }

  if (*probe) {
    return guarded([&] {
      const ScenarioConfig config = load_config(config_path);
      const UniquenessReport rep = uniqueness_probe(config, eps);
      nlohmann::json out = {{"epsilon", rep.epsilon},         {"max_difference", rep.max_difference},
                            {"ratio", rep.ratio},             {"bit_identical", rep.bit_identical},
                            {"completed", rep.completed},     {"estar_breach", rep.estar_breach},
                            {"message", rep.message}};
      const auto path = out_path(config, "_uniqueness.json");
      std::ofstream(path) << out.dump(2) << '\n';
      std::cout << out.dump(2) << '\n';
      return exit_code::ok;
    });
  }

  if (*sw) {
    return guarded([&] {
      const ScenarioConfig config = load_config(config_path);
      std::ifstream in(grid_path);
      if (!in) throw ConfigError("", "cannot open grid file '" + grid_path + "'");
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("grid", std::string("JSON syntax error: ") + e.what());
      }
      const SweepResult res = sweep(config, parse_grid(doc));
      const auto cells_path = out_path(config, "_sweep.csv");
      std::ofstream cells(cells_path);
      write_sweep_csv(res.cells, cells);
      std::cout << "wrote " << cells_path.string() << '\n';
      if (!res.scaled.empty()) {
        const auto scale_path = out_path(config, "_sweep_scales.csv");
        std::ofstream scaled(scale_path);
        write_sweep_csv(res.scaled, scaled);
        std::cout << "wrote " << scale_path.string() << '\n';
      }
      return exit_code::ok;
    });
  }

  if (*ver) {
    return guarded([&] {
      const auto checks = verify(load_config(config_path));
      bool all = true;
      for (const auto& c : checks) {
        const char* tag = c.informational ? "INFO" : (c.passed ? "PASS" : "FAIL");
        std::cout << '[' << tag << "] " << c.name << ": " << c.detail << '\n';
        if (!c.informational) all = all && c.passed;
      }
      return all ? exit_code::ok : exit_code::check_failed;
    });
  }
  return exit_code::ok;
}
