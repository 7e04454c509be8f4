#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kheat/errors.hpp"
#include "kheat/runner.hpp"

using namespace kheat;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("kheat_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json minimal() { return {{"spec_version", 1}}; }

ScenarioConfig short_default(double t_end) {
  ScenarioConfig c = default_scenario();
  c.t_end = t_end;
  return c;
}

ScenarioConfig linear_single_mode() {
  ScenarioConfig c = default_scenario();
  c.params = ModelParams(1.0, 0.0, 1.0, 1.0);
  c.n_modes = 1;
  c.y0 = {ProfileSpec::Kind::sine_mode, 1, 1.0, {}};
  c.stepper.dt = 1e-2;
  c.t_end = 10.0;
  return c;
}

std::string config_error_field(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
  const ScenarioConfig d = default_scenario();
  const json j = to_json(d);
  CHECK(to_json(parse_config(j)) == j);
  CHECK(j["n_modes"] == 16);
  CHECK(j["params"]["m1"] == 0.5);
  CHECK(j["initial"]["y0"]["profile"] == "bump");

  const ScenarioConfig m = parse_config(minimal());
  CHECK(to_json(m)["n_modes"] == 16);
}

TEST_CASE("config lengths and auto dt") {
  json doc = minimal();
  doc["domain"] = {{"kind", "interval"}, {"length", "2pi"}};
  doc["stepper"] = {{"dt", "auto"}};
  ScenarioConfig c = parse_config(doc);
  CHECK(c.domain.length() == doctest::Approx(2.0 * 3.141592653589793));
  CHECK(c.auto_dt);
  doc["domain"] = {{"kind", "rectangle"}, {"lx", "0.5*pi"}, {"ly", 2.0}};
  c = parse_config(doc);
  CHECK(c.domain.dimension() == 2);
  CHECK(c.domain.length(0) == doctest::Approx(0.5 * 3.141592653589793));
  CHECK(c.domain.length(1) == 2.0);
}

TEST_CASE("config errors name the offending field") {
  CHECK(config_error_field(json::object()) == "spec_version");
  CHECK(config_error_field({{"spec_version", 2}}) == "spec_version");

  json doc = minimal();
  doc["bogus"] = 1;
  CHECK(config_error_field(doc) == "bogus");

  doc = minimal();
  doc["params"] = {{"gamma", 1.0}};
  CHECK(config_error_field(doc) == "params.gamma");

  doc = minimal();
  doc["params"] = {{"m0", "one"}};
  CHECK(config_error_field(doc) == "params.m0");

  doc = minimal();
  doc["n_modes"] = 0;
  CHECK(config_error_field(doc) == "n_modes");

  doc = minimal();
  doc["domain"] = {{"kind", "interval"}, {"length", -1.0}};
  CHECK(config_error_field(doc) == "domain");

  doc = minimal();
  doc["initial"] = {{"y0", {{"profile", "gaussian"}}}};
  CHECK(config_error_field(doc) == "initial.y0.profile");

  doc = minimal();
  doc["stepper"] = {{"method", "euler"}};
  CHECK(config_error_field(doc) == "stepper.method");

  doc = minimal();
  doc["stepper"] = {{"dt", -0.1}};
  CHECK(config_error_field(doc) == "stepper.dt");
}

TEST_CASE("opposite-sign coupling is a config error") {
  json doc = minimal();
  doc["params"] = {{"alpha", 1.0}, {"beta", -1.0}};
  try {
    parse_config(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "params");
    CHECK(std::string(e.what()).find("same sign") != std::string::npos);
  }
}

TEST_CASE("JSON syntax errors report the position") {
  const fs::path dir = scratch("syntax");
  const fs::path file = dir / "broken.json";
  std::ofstream(file) << "{\n  \"spec_version\": 1,\n  \"n_modes\": ,\n}\n";
  try {
    load_config(file.string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config((dir / "missing.json").string()), ConfigError);
}

TEST_CASE("profile coefficients") {
  const auto b = build_basis(Domain::interval(3.141592653589793), 4);
  const auto sine = profile_coefficients({ProfileSpec::Kind::sine_mode, 2, 0.7, {}}, b);
  CHECK(sine == std::vector<double>{0.0, 0.7, 0.0, 0.0});
  const auto coeffs = profile_coefficients({ProfileSpec::Kind::coefficients, 1, 0.0, {1.0, 2.0}}, b);
  CHECK(coeffs == std::vector<double>{1.0, 2.0, 0.0, 0.0});
  // The bump is symmetric about the midpoint, so even modes vanish.
  const auto bump = profile_coefficients({ProfileSpec::Kind::bump, 1, 0.5, {}}, b);
  CHECK(bump[0] > 0.0);
  CHECK(std::abs(bump[1]) < 1e-14);
  CHECK(std::abs(bump[3]) < 1e-14);
  CHECK_THROWS_AS(profile_coefficients({ProfileSpec::Kind::sine_mode, 5, 1.0, {}}, b), InvalidArgument);
}

TEST_CASE("zero scenario writes identically zero energies") {
  ScenarioConfig c = short_default(1.0);
  c.y0 = {};
  c.name = "zero";
  c.output_dir = scratch("zero").string();
  c.record_every = 100;
  std::ostringstream log;
  REQUIRE(run_scenario(c, log) == exit_code::ok);

  std::ifstream csv(fs::path(c.output_dir) / "zero_trajectory.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "t,E,E_star,D,kinetic,potential_linear,potential_kirchhoff,thermal,S");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string t;
    std::string e;
    std::getline(ss, t, ',');
    std::getline(ss, e, ',');
    CHECK(e == "0");
    CHECK(line.find("-0") == std::string::npos);
  }
  CHECK(rows == 11);
  CHECK(fs::exists(fs::path(c.output_dir) / "zero_diagnostics.json"));
}

TEST_CASE("trajectory CSV layout and byte-identical reruns") {
  ScenarioConfig c = short_default(2.0);
  c.record_every = 7;
  c.output_dir = scratch("det_a").string();
  std::ostringstream log;
  REQUIRE(run_scenario(c, log) == exit_code::ok);
  const std::string first = slurp(fs::path(c.output_dir) / "default_trajectory.csv");
  c.output_dir = scratch("det_b").string();
  REQUIRE(run_scenario(c, log) == exit_code::ok);
  const std::string second = slurp(fs::path(c.output_dir) / "default_trajectory.csv");
  CHECK(first == second);

  // header + records at step 0, multiples of 7 up to 1995, and step 2000
  std::size_t lines = 0;
  for (char ch : first) lines += ch == '\n';
  CHECK(lines == 1 + 1 + 285 + 1);
}

TEST_CASE("default scenario diagnostics") {
  ScenarioConfig c = default_scenario();
  c.output_dir = scratch("default").string();
  std::ostringstream log;
  REQUIRE(run_scenario(c, log) == exit_code::ok);
  std::ifstream in(fs::path(c.output_dir) / "default_diagnostics.json");
  const json diag = json::parse(in);
  CHECK(diag["energy_monotone"] == true);
  CHECK(diag["first_apriori"]["holds"] == true);
  CHECK(diag["decay_fit"]["r_squared"].get<double>() >= 0.99);
  CHECK(diag["decay_fit"]["omega"].get<double>() > 0.0);
  CHECK(diag["E0"].get<double>() == doctest::Approx(0.2126784366746599).epsilon(1e-12));
}

TEST_CASE("output directory override") {
  ScenarioConfig c = default_scenario();
  c.output_dir = "from_config";
  ::unsetenv(output_dir_env);
  CHECK(output_directory(c) == "from_config");
  ::setenv(output_dir_env, "/tmp/kheat_env_dir", 1);
  CHECK(output_directory(c) == "/tmp/kheat_env_dir");
  ::unsetenv(output_dir_env);
}

TEST_CASE("convergence study") {
  const ScenarioConfig lin = linear_single_mode();
  CHECK_THROWS_AS(convergence_study(lin, {8}), InvalidArgument);
  CHECK_THROWS_AS(convergence_study(lin, {8, 8}), InvalidArgument);
  CHECK_THROWS_AS(convergence_study(lin, {16, 8}), InvalidArgument);
  CHECK_THROWS_AS(convergence_study(lin, {0, 8}), InvalidArgument);

  // Data in mode 1 only, m1 = 0: extra modes stay zero, so every resolution agrees.
  const auto rows = convergence_study(lin, {1, 2, 4});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].n_coarse == 1);
  CHECK(rows[1].n_fine == 4);
  for (const auto& r : rows) {
    CHECK(r.energy_discrepancy < 1e-14);
    CHECK(r.terminal_discrepancy < 1e-14);
  }
}

TEST_CASE("uniqueness probe") {
  const ScenarioConfig c = short_default(2.0);
  const UniquenessReport zero = uniqueness_probe(c, 0.0);
  CHECK(zero.bit_identical);
  CHECK(zero.max_difference == 0.0);
  CHECK(zero.ratio == 0.0);
  CHECK(zero.completed);

  const UniquenessReport small = uniqueness_probe(c, 1e-6);
  CHECK_FALSE(small.bit_identical);
  CHECK(small.ratio > 0.0);

  UniquenessReport huge;
  CHECK_NOTHROW(huge = uniqueness_probe(c, 1e3));
  CHECK((!huge.completed || huge.estar_breach));
  CHECK_THROWS_AS(uniqueness_probe(c, -1.0), InvalidArgument);
}

TEST_CASE("parameter sweep") {
  ScenarioConfig base = short_default(10.0);
  base.stepper.dt = 1e-2;
  base.n_modes = 8;

  SweepGrid one;
  const SweepResult single = sweep(base, one, 2);
  REQUIRE(single.cells.size() == 1);
  CHECK(single.cells[0].ok);
  CHECK(single.cells[0].omega > 0.0);

  SweepGrid grid;
  grid.m1 = {0.0, 0.5};
  grid.alpha = {1.0, -1.0};
  grid.n_modes = {4, 8};
  const SweepResult res = sweep(base, grid, 3);
  REQUIRE(res.cells.size() == 8);
  CHECK(res.cells[0].m1 == 0.0);
  CHECK(res.cells[0].n_modes == 4);
  CHECK(res.cells[1].n_modes == 8);
  CHECK(res.cells[2].alpha == -1.0);
  CHECK(res.cells[4].m1 == 0.5);
  for (const auto& cell : res.cells) {
    if (cell.alpha < 0.0) {
      CHECK_FALSE(cell.ok);
      CHECK(cell.error.find("same sign") != std::string::npos);
    } else {
      CHECK(cell.ok);
      CHECK(cell.energy_monotone);
    }
  }

  std::ostringstream csv;
  write_sweep_csv(res.cells, csv);
  CHECK(csv.str().rfind("m1,alpha,beta,n_modes,scale,ok,omega,r_squared,energy_monotone,error\n", 0) == 0);
}

TEST_CASE("linear decay rate does not depend on the data scale") {
  ScenarioConfig base = short_default(10.0);
  base.params = ModelParams(1.0, 0.0, 1.0, 1.0);
  base.stepper.dt = 1e-2;
  base.n_modes = 8;
  SweepGrid grid;
  grid.scales = {1.0, 0.1, 0.01};
  const SweepResult res = sweep(base, grid, 0);
  REQUIRE(res.scaled.size() == 3);
  for (const auto& cell : res.scaled) {
    REQUIRE(cell.ok);
    CHECK(cell.omega == doctest::Approx(res.scaled[0].omega).epsilon(1e-9));
  }
}

TEST_CASE("sweep grid parsing") {
  const SweepGrid g = parse_grid(json{{"m1", {0.0, 1.0}}, {"n_modes", {4, 8}}});
  CHECK(g.m1.size() == 2);
  CHECK(g.n_modes == std::vector<std::size_t>{4, 8});
  CHECK_THROWS_AS(parse_grid(json{{"gamma", {1.0}}}), ConfigError);
  CHECK_THROWS_AS(parse_grid(json{{"m1", 0.5}}), ConfigError);
  CHECK_THROWS_AS(parse_grid(json{{"n_modes", {0}}}), ConfigError);
}

TEST_CASE("random small-data scenarios are reproducible and admissible") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const ScenarioConfig a = random_small_data_scenario(seed);
    const ScenarioConfig b = random_small_data_scenario(seed);
    CHECK(to_json(a) == to_json(b));
    CHECK(a.params.alpha() * a.params.beta() > 0.0);
    CHECK(a.n_modes >= 2);
  }
  CHECK(to_json(random_small_data_scenario(1)) != to_json(random_small_data_scenario(2)));
}

TEST_CASE("verify passes on the default scenario") {
  const auto checks = verify(default_scenario());
  CHECK(checks.size() >= 9);
  for (const auto& c : checks) {
    INFO(c.name << ": " << c.detail);
    if (!c.informational) CHECK(c.passed);
  }
}
