#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kheat/diagnostics.hpp"
#include "kheat/model.hpp"
#include "kheat/spectrum.hpp"
#include "kheat/timeloop.hpp"

namespace kheat {

/// Process exit codes of the CLI.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int check_failed = 1;
inline constexpr int config_error = 2;
inline constexpr int solver_divergence = 3;
}  // namespace exit_code

inline constexpr int config_schema_version = 1;
inline constexpr const char* output_dir_env = "KHEAT_OUTPUT_DIR";

/// Invalid scenario document; `field` is the JSON path of the offending entry.
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

private:
  std::string field_;
};

/// Initial-data profile for one of y0, y1, theta0.
struct ProfileSpec {
  enum class Kind { zero, sine_mode, bump, coefficients };
  Kind kind = Kind::zero;
  std::size_t mode = 1;      // sine_mode: 1-based index in basis order
  double amplitude = 0.0;    // sine_mode: modal coefficient; bump: peak value
  std::vector<double> values;  // coefficients, zero-padded to n_modes
};

struct ScenarioConfig {
  int spec_version = config_schema_version;
  Domain domain = Domain::interval(3.141592653589793);
  std::size_t n_modes = 16;
  ModelParams params{1.0, 0.5, 1.0, 1.0};
  ProfileSpec y0{ProfileSpec::Kind::bump, 1, 0.5, {}};
  ProfileSpec y1;
  ProfileSpec theta0;
  double data_scale = 1.0;  // multiplies all initial coefficients
  StepperConfig stepper;
  bool auto_dt = false;  // use default_time_step instead of stepper.dt
  double t_end = 20.0;
  std::size_t record_every = 1;
  std::size_t state_stride = 1;
  std::string output_dir = ".";
  std::string name = "scenario";
  std::uint64_t seed = 20240601;
};

/// Interval pi, 16 modes, m0 = 1, m1 = 0.5, alpha = beta = 1, y0 = 0.5 * bump,
/// implicit midpoint dt = 1e-3, t_end = 20.
ScenarioConfig default_scenario();

ScenarioConfig parse_config(const nlohmann::json& doc);
/// Reads and parses a JSON file. Syntax errors report line and column.
ScenarioConfig load_config(const std::string& path);
nlohmann::json to_json(const ScenarioConfig& config);

/// Modal coefficients of one profile on the basis.
std::vector<double> profile_coefficients(const ProfileSpec& profile, const EigenBasis& basis);

struct PreparedScenario {
  EigenBasis basis;
  ModalState initial;
  StepperConfig stepper;  // with dt resolved
};

PreparedScenario prepare(const ScenarioConfig& config);

struct ScenarioDiagnostics {
  double energy_balance_residual = 0.0;
  double discrete_balance_residual = 0.0;
  AprioriCheck apriori;
  std::optional<DecayFit> decay_fit;
  std::string decay_fit_error;
  EstarBound estar;
  double max_energy_increment = 0.0;
  bool energy_monotone = true;
};

/// Default tolerances: monotone if every increment <= 1e-9 E(0); a-priori
/// tolerance 1e-8 E(0); decay fit on [0.2 T, 0.8 T].
ScenarioDiagnostics diagnose(const Trajectory& traj);
nlohmann::json to_json(const ScenarioDiagnostics& diag);

struct ScenarioResult {
  Trajectory trajectory;
  ScenarioDiagnostics diagnostics;
};

ScenarioResult execute(const ScenarioConfig& config);

/// Columns t,E,E_star,D,kinetic,potential_linear,potential_kirchhoff,thermal,S;
/// 17 significant digits.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);

/// Resolves the output directory: env override first, then config.output_dir.
std::string output_directory(const ScenarioConfig& config);

/// Runs the scenario and writes <dir>/<name>_trajectory.csv and
/// <dir>/<name>_diagnostics.json. Returns an exit code; messages go to `log`.
int run_scenario(const ScenarioConfig& config, std::ostream& log);

struct ConvergenceRow {
  std::size_t n_coarse = 0;
  std::size_t n_fine = 0;
  double energy_discrepancy = 0.0;    // max_t |E_coarse - E_fine|
  double terminal_discrepancy = 0.0;  // l2 over the first n_coarse modes at t_end
};

/// Runs the scenario at each mode count (common dt) and compares consecutive
/// resolutions. mode_counts must be strictly increasing with >= 2 entries.
std::vector<ConvergenceRow> convergence_study(const ScenarioConfig& config,
                                              const std::vector<std::size_t>& mode_counts);

struct UniquenessReport {
  double epsilon = 0.0;
  double max_difference = 0.0;  // max_t sqrt of the difference energy
  double ratio = 0.0;           // max_difference / epsilon (0 for epsilon = 0)
  bool bit_identical = false;
  bool completed = true;        // false when the perturbed run diverged
  bool estar_breach = false;
  std::string message;
};

/// Base run against y0 + epsilon e_1. Difference energy:
///   |dv|^2 + (m0 + m1 S(h_base)) sum lambda dh^2 + (alpha/beta) |dc|^2.
UniquenessReport uniqueness_probe(const ScenarioConfig& config, double epsilon);

/// Parameter grid; empty axes fall back to the base config value.
struct SweepGrid {
  std::vector<double> m1;
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<std::size_t> n_modes;
  std::vector<double> scales;  // data scale family at the base parameter point
};

SweepGrid parse_grid(const nlohmann::json& doc);

struct SweepCell {
  double m1 = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t n_modes = 0;
  double scale = 1.0;
  bool ok = false;
  std::string error{};
  double omega = 0.0;
  double r_squared = 0.0;
  bool energy_monotone = false;
};

struct SweepResult {
  std::vector<SweepCell> cells;   // grid order: m1, alpha, beta, n_modes (fastest)
  std::vector<SweepCell> scaled;  // one per entry of grid.scales
};

/// Cells run concurrently; results are ordered by grid index.
SweepResult sweep(const ScenarioConfig& base, const SweepGrid& grid, unsigned threads = 0);

void write_sweep_csv(const std::vector<SweepCell>& cells, std::ostream& out);

struct CheckResult {
  std::string name;
  bool passed = false;
  bool informational = false;
  std::string detail;
};

/// Invariant suite on one scenario: zero-data exactness, monotone energy,
/// a-priori estimate, dissipation identity and its dt order, balance residual
/// order, sign-flip invariance, decay fit, plus informational E* and decay-lemma
/// reports.
std::vector<CheckResult> verify(const ScenarioConfig& config);

/// Random small-data scenario with alpha*beta > 0, reproducible from the seed.
/// Uses the default stepper (implicit midpoint, dt = 1e-3) and t_end = 5.
ScenarioConfig random_small_data_scenario(std::uint64_t seed);

}  // namespace kheat
