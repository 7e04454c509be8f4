#include "kheat/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "kheat/errors.hpp"

namespace kheat {

using nlohmann::json;

namespace {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---- config parsing helpers -------------------------------------------------

void reject_unknown_keys(const json& obj, const std::string& path, std::initializer_list<const char*> known) {
  for (const auto& item : obj.items()) {
    const bool found = std::any_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; });
    if (!found) throw ConfigError(path.empty() ? item.key() : path + "." + item.key(), "unknown field");
  }
}

const json& require_object(const json& doc, const std::string& path) {
  if (!doc.is_object()) throw ConfigError(path, "expected an object");
  return doc;
}

double read_number(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  throw ConfigError(path, "expected a number");
}

// Numbers or strings like "pi", "2pi", "0.5*pi".
double read_length(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s.size() >= 2 && s.substr(s.size() - 2) == "pi") {
      std::string factor = s.substr(0, s.size() - 2);
      if (!factor.empty() && factor.back() == '*') factor.pop_back();
      if (factor.empty()) return std::numbers::pi;
      try {
        std::size_t used = 0;
        const double f = std::stod(factor, &used);
        if (used == factor.size()) return f * std::numbers::pi;
      } catch (const std::exception&) {
      }
    }
  }
  throw ConfigError(path, "expected a length (number or multiple of \"pi\")");
}

std::size_t read_count(const json& v, const std::string& path) {
  if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)) {
    return v.get<std::size_t>();
  }
  throw ConfigError(path, "expected a nonnegative integer");
}

ProfileSpec parse_profile(const json& doc, const std::string& path) {
  require_object(doc, path);
  reject_unknown_keys(doc, path, {"profile", "mode", "amplitude", "values"});
  if (!doc.contains("profile") || !doc["profile"].is_string()) throw ConfigError(path + ".profile", "missing profile name");
  const std::string kind = doc["profile"].get<std::string>();
  ProfileSpec p;
  if (kind == "zero") {
    p.kind = ProfileSpec::Kind::zero;
  } else if (kind == "sine_mode") {
    p.kind = ProfileSpec::Kind::sine_mode;
    p.mode = doc.contains("mode") ? read_count(doc["mode"], path + ".mode") : 1;
    if (p.mode == 0) throw ConfigError(path + ".mode", "modes are numbered from 1");
    p.amplitude = doc.contains("amplitude") ? read_number(doc["amplitude"], path + ".amplitude") : 1.0;
  } else if (kind == "bump") {
    p.kind = ProfileSpec::Kind::bump;
    p.amplitude = doc.contains("amplitude") ? read_number(doc["amplitude"], path + ".amplitude") : 1.0;
  } else if (kind == "coefficients") {
    p.kind = ProfileSpec::Kind::coefficients;
    if (!doc.contains("values") || !doc["values"].is_array()) throw ConfigError(path + ".values", "expected an array");
    for (std::size_t i = 0; i < doc["values"].size(); ++i) {
      p.values.push_back(read_number(doc["values"][i], path + ".values[" + std::to_string(i) + "]"));
    }
  } else {
    throw ConfigError(path + ".profile", "unknown profile '" + kind + "' (zero, sine_mode, bump, coefficients)");
  }
  if (!std::isfinite(p.amplitude)) throw ConfigError(path + ".amplitude", "must be finite");
  return p;
}

json profile_to_json(const ProfileSpec& p) {
  switch (p.kind) {
    case ProfileSpec::Kind::zero:
      return {{"profile", "zero"}};
    case ProfileSpec::Kind::sine_mode:
      return {{"profile", "sine_mode"}, {"mode", p.mode}, {"amplitude", p.amplitude}};
    case ProfileSpec::Kind::bump:
      return {{"profile", "bump"}, {"amplitude", p.amplitude}};
    case ProfileSpec::Kind::coefficients:
      return {{"profile", "coefficients"}, {"values", p.values}};
  }
  return {};
}

double bump_1d(double s, double len) {
  const double q = 4.0 * s * (len - s) / (len * len);
  return q * q;
}

// ---- small helpers ------------------------------------------------------------

ScenarioConfig with_params(const ScenarioConfig& base, double m1, double alpha, double beta) {
  ScenarioConfig c = base;
  c.params = ModelParams(base.params.m0(), m1, alpha, beta);
  return c;
}

double resolved_dt(const ScenarioConfig& config, const EigenBasis& basis, const ModalState& initial) {
  return config.auto_dt ? default_time_step(config.params, basis, initial) : config.stepper.dt;
}

}  // namespace

ScenarioConfig default_scenario() {
  ScenarioConfig c;
  c.name = "default";
  return c;
}

ScenarioConfig parse_config(const json& doc) {
  require_object(doc, "");
  reject_unknown_keys(doc, "", {"spec_version", "name", "domain", "n_modes", "params", "initial", "stepper", "t_end",
                                "record_every", "state_stride", "output", "seed"});
  ScenarioConfig c;

  if (!doc.contains("spec_version")) throw ConfigError("spec_version", "missing schema version");
  if (!doc["spec_version"].is_number_integer() || doc["spec_version"].get<int>() != config_schema_version) {
    throw ConfigError("spec_version", "unsupported schema version (expected " + std::to_string(config_schema_version) + ")");
  }
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) throw ConfigError("name", "expected a string");
    c.name = doc["name"].get<std::string>();
  }

  if (doc.contains("domain")) {
    const json& d = require_object(doc["domain"], "domain");
    reject_unknown_keys(d, "domain", {"kind", "length", "lx", "ly"});
    const std::string kind = d.value("kind", std::string("interval"));
    try {
      if (kind == "interval") {
        if (!d.contains("length")) throw ConfigError("domain.length", "missing");
        c.domain = Domain::interval(read_length(d["length"], "domain.length"));
      } else if (kind == "rectangle") {
        if (!d.contains("lx") || !d.contains("ly")) throw ConfigError("domain", "rectangle needs lx and ly");
        c.domain = Domain::rectangle(read_length(d["lx"], "domain.lx"), read_length(d["ly"], "domain.ly"));
      } else {
        throw ConfigError("domain.kind", "expected 'interval' or 'rectangle'");
      }
    } catch (const InvalidArgument& e) {
      throw ConfigError("domain", e.what());
    }
  }

  if (doc.contains("n_modes")) c.n_modes = read_count(doc["n_modes"], "n_modes");
  if (c.n_modes == 0) throw ConfigError("n_modes", "must be at least 1");

  if (doc.contains("params")) {
    const json& p = require_object(doc["params"], "params");
    reject_unknown_keys(p, "params", {"m0", "m1", "alpha", "beta"});
    auto get = [&](const char* key, double fallback) {
      return p.contains(key) ? read_number(p[key], std::string("params.") + key) : fallback;
    };
    try {
      c.params = ModelParams(get("m0", c.params.m0()), get("m1", c.params.m1()), get("alpha", c.params.alpha()),
                             get("beta", c.params.beta()));
    } catch (const InvalidArgument& e) {
      throw ConfigError("params", e.what());
    }
  }

  if (doc.contains("initial")) {
    const json& ini = require_object(doc["initial"], "initial");
    reject_unknown_keys(ini, "initial", {"y0", "y1", "theta0", "scale"});
    if (ini.contains("y0")) c.y0 = parse_profile(ini["y0"], "initial.y0");
    if (ini.contains("y1")) c.y1 = parse_profile(ini["y1"], "initial.y1");
    if (ini.contains("theta0")) c.theta0 = parse_profile(ini["theta0"], "initial.theta0");
    if (ini.contains("scale")) c.data_scale = read_number(ini["scale"], "initial.scale");
    for (const auto* p : {&c.y0, &c.y1, &c.theta0}) {
      if (p->kind == ProfileSpec::Kind::sine_mode && p->mode > c.n_modes) {
        throw ConfigError("initial", "sine_mode index exceeds n_modes");
      }
      if (p->kind == ProfileSpec::Kind::coefficients && p->values.size() > c.n_modes) {
        throw ConfigError("initial", "more coefficients than n_modes");
      }
    }
  }

  if (doc.contains("stepper")) {
    const json& s = require_object(doc["stepper"], "stepper");
    reject_unknown_keys(s, "stepper", {"method", "dt", "newton_tol", "newton_max_iter"});
    if (s.contains("method")) {
      if (!s["method"].is_string()) throw ConfigError("stepper.method", "expected a string");
      try {
        c.stepper.method = parse_method(s["method"].get<std::string>());
      } catch (const InvalidArgument& e) {
        throw ConfigError("stepper.method", e.what());
      }
    }
    if (s.contains("dt")) {
      if (s["dt"].is_string() && s["dt"].get<std::string>() == "auto") {
        c.auto_dt = true;
      } else {
        c.stepper.dt = read_number(s["dt"], "stepper.dt");
        if (!(c.stepper.dt > 0.0)) throw ConfigError("stepper.dt", "must be positive or \"auto\"");
      }
    }
    if (s.contains("newton_tol")) {
      c.stepper.newton_tol = read_number(s["newton_tol"], "stepper.newton_tol");
      if (!(c.stepper.newton_tol > 0.0)) throw ConfigError("stepper.newton_tol", "must be positive");
    }
    if (s.contains("newton_max_iter")) {
      c.stepper.newton_max_iter = static_cast<int>(read_count(s["newton_max_iter"], "stepper.newton_max_iter"));
      if (c.stepper.newton_max_iter < 1) throw ConfigError("stepper.newton_max_iter", "must be at least 1");
    }
  }

  if (doc.contains("t_end")) c.t_end = read_number(doc["t_end"], "t_end");
  if (!(c.t_end > 0.0) || !std::isfinite(c.t_end)) throw ConfigError("t_end", "must be positive");
  if (doc.contains("record_every")) c.record_every = read_count(doc["record_every"], "record_every");
  if (c.record_every == 0) throw ConfigError("record_every", "must be at least 1");
  if (doc.contains("state_stride")) c.state_stride = read_count(doc["state_stride"], "state_stride");
  if (c.state_stride == 0) throw ConfigError("state_stride", "must be at least 1");

  if (doc.contains("output")) {
    const json& o = require_object(doc["output"], "output");
    reject_unknown_keys(o, "output", {"dir"});
    if (o.contains("dir")) {
      if (!o["dir"].is_string()) throw ConfigError("output.dir", "expected a string");
      c.output_dir = o["dir"].get<std::string>();
    }
  }
  if (doc.contains("seed")) c.seed = read_count(doc["seed"], "seed");
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("JSON syntax error: ") + e.what());
  }
  return parse_config(doc);
}

json to_json(const ScenarioConfig& c) {
  json domain;
  if (c.domain.kind() == Domain::Kind::interval) {
    domain = {{"kind", "interval"}, {"length", c.domain.length(0)}};
  } else {
    domain = {{"kind", "rectangle"}, {"lx", c.domain.length(0)}, {"ly", c.domain.length(1)}};
  }
  json stepper = {{"method", std::string(method_name(c.stepper.method))},
                  {"newton_tol", c.stepper.newton_tol},
                  {"newton_max_iter", c.stepper.newton_max_iter}};
  if (c.auto_dt) {
    stepper["dt"] = "auto";
  } else {
    stepper["dt"] = c.stepper.dt;
  }
  return {{"spec_version", c.spec_version},
          {"name", c.name},
          {"domain", domain},
          {"n_modes", c.n_modes},
          {"params", {{"m0", c.params.m0()}, {"m1", c.params.m1()}, {"alpha", c.params.alpha()}, {"beta", c.params.beta()}}},
          {"initial",
           {{"y0", profile_to_json(c.y0)},
            {"y1", profile_to_json(c.y1)},
            {"theta0", profile_to_json(c.theta0)},
            {"scale", c.data_scale}}},
          {"stepper", stepper},
          {"t_end", c.t_end},
          {"record_every", c.record_every},
          {"state_stride", c.state_stride},
          {"output", {{"dir", c.output_dir}}},
          {"seed", c.seed}};
}

std::vector<double> profile_coefficients(const ProfileSpec& profile, const EigenBasis& basis) {
  std::vector<double> coeffs(basis.size(), 0.0);
  switch (profile.kind) {
    case ProfileSpec::Kind::zero:
      break;
    case ProfileSpec::Kind::sine_mode:
      if (profile.mode == 0 || profile.mode > basis.size()) throw InvalidArgument("sine_mode index out of range");
      coeffs[profile.mode - 1] = profile.amplitude;
      break;
    case ProfileSpec::Kind::coefficients:
      if (profile.values.size() > basis.size()) throw InvalidArgument("more coefficients than modes");
      std::copy(profile.values.begin(), profile.values.end(), coeffs.begin());
      break;
    case ProfileSpec::Kind::bump: {
      const Domain dom = basis.domain();
      const double amp = profile.amplitude;
      coeffs = project_initial_data(basis, [&](const Point& p) {
        double v = amp * bump_1d(p[0], dom.length(0));
        if (dom.kind() == Domain::Kind::rectangle) v *= bump_1d(p[1], dom.length(1));
        return v;
      });
      break;
    }
  }
  return coeffs;
}

PreparedScenario prepare(const ScenarioConfig& config) {
  EigenBasis basis = build_basis(config.domain, config.n_modes);
  ModalState initial = ModalState::zero(basis.size());
  initial.h = profile_coefficients(config.y0, basis);
  initial.v = profile_coefficients(config.y1, basis);
  initial.c = profile_coefficients(config.theta0, basis);
  if (config.data_scale != 1.0) {
    for (auto* xs : {&initial.h, &initial.v, &initial.c}) {
      for (double& x : *xs) x *= config.data_scale;
    }
  }
  StepperConfig stepper = config.stepper;
  stepper.dt = resolved_dt(config, basis, initial);
  stepper.validate(basis);
  return {std::move(basis), std::move(initial), stepper};
}

ScenarioDiagnostics diagnose(const Trajectory& traj) {
  ScenarioDiagnostics d;
  const double e0 = traj.records.front().E;
  d.energy_balance_residual = traj.records.size() >= 2 ? energy_balance_residual(traj) : 0.0;
  d.discrete_balance_residual = discrete_balance_residual(traj);
  d.apriori = first_apriori_check(traj, 1e-8 * e0);
  d.max_energy_increment = max_energy_increment(traj);
  d.energy_monotone = d.max_energy_increment <= 1e-9 * e0;
  d.estar = estar_bound_monitor(traj);
  try {
    d.decay_fit = fit_exponential_decay(traj.records, default_fit_window(traj.records.back().t));
  } catch (const InvalidArgument& e) {
    d.decay_fit_error = e.what();
  }
  return d;
}

json to_json(const ScenarioDiagnostics& d) {
  json fit = nullptr;
  if (d.decay_fit) {
    fit = {{"C", d.decay_fit->C},
           {"omega", d.decay_fit->omega},
           {"r_squared", d.decay_fit->r_squared},
           {"window", {d.decay_fit->window.t_lo, d.decay_fit->window.t_hi}},
           {"samples", d.decay_fit->samples},
           {"decaying", d.decay_fit->decaying}};
  }
  json estar = {{"C_emp", d.estar.C_emp},
                {"E_star0", d.estar.estar0},
                {"horizon", d.estar.horizon ? json(*d.estar.horizon) : json(nullptr)},
                {"breach", d.estar.breach},
                {"holds", d.estar.holds}};
  json out = {{"energy_balance_residual", d.energy_balance_residual},
              {"discrete_balance_residual", d.discrete_balance_residual},
              {"first_apriori", {{"holds", d.apriori.holds}, {"worst_margin", d.apriori.worst_margin}}},
              {"decay_fit", fit},
              {"estar_bound", estar},
              {"max_energy_increment", d.max_energy_increment},
              {"energy_monotone", d.energy_monotone}};
  if (!d.decay_fit) out["decay_fit_error"] = d.decay_fit_error;
  return out;
}

ScenarioResult execute(const ScenarioConfig& config) {
  PreparedScenario prep = prepare(config);
  Trajectory traj = simulate(prep.stepper, config.params, prep.basis, prep.initial, config.t_end,
                             config.record_every, config.state_stride);
  ScenarioDiagnostics diag = diagnose(traj);
  return {std::move(traj), std::move(diag)};
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  out << "t,E,E_star,D,kinetic,potential_linear,potential_kirchhoff,thermal,S\n";
  for (const auto& r : traj.records) {
    out << format_double(r.t) << ',' << format_double(r.E) << ',' << format_double(r.E_star) << ','
        << format_double(r.D) << ',' << format_double(r.kinetic) << ',' << format_double(r.potential_linear) << ','
        << format_double(r.potential_kirchhoff) << ',' << format_double(r.thermal) << ',' << format_double(r.S)
        << '\n';
  }
}

std::string output_directory(const ScenarioConfig& config) {
  if (const char* env = std::getenv(output_dir_env); env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

int run_scenario(const ScenarioConfig& config, std::ostream& log) {
  try {
    ScenarioResult result = execute(config);
    const std::filesystem::path dir = output_directory(config);
    std::filesystem::create_directories(dir);
    const auto csv_path = dir / (config.name + "_trajectory.csv");
    const auto json_path = dir / (config.name + "_diagnostics.json");
    {
      std::ofstream csv(csv_path);
      write_trajectory_csv(result.trajectory, csv);
      if (!csv) throw std::runtime_error("failed writing " + csv_path.string());
    }
    {
      json diag = to_json(result.diagnostics);
      diag["steps"] = result.trajectory.steps;
      diag["dt"] = result.trajectory.dt;
      diag["records"] = result.trajectory.records.size();
      diag["E0"] = result.trajectory.records.front().E;
      diag["E_final"] = result.trajectory.records.back().E;
      std::ofstream js(json_path);
      js << diag.dump(2) << '\n';
      if (!js) throw std::runtime_error("failed writing " + json_path.string());
    }
    log << "wrote " << csv_path.string() << " and " << json_path.string() << '\n';
    return exit_code::ok;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const InvalidArgument& e) {
    log << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const SolverDivergence& e) {
    log << "solver divergence: " << e.what() << '\n';
    return exit_code::solver_divergence;
  } catch (const NumericFault& e) {
    log << "numeric fault: " << e.what() << '\n';
    return exit_code::solver_divergence;
  }
}

std::vector<ConvergenceRow> convergence_study(const ScenarioConfig& config,
                                              const std::vector<std::size_t>& mode_counts) {
  if (mode_counts.size() < 2) throw InvalidArgument("convergence study needs at least two mode counts");
  for (std::size_t i = 0; i < mode_counts.size(); ++i) {
    if (mode_counts[i] == 0) throw InvalidArgument("mode counts must be positive");
    if (i > 0 && mode_counts[i] <= mode_counts[i - 1]) throw InvalidArgument("mode counts must be strictly increasing");
  }

  // One time step for every resolution, fixed by the finest basis when automatic.
  ScenarioConfig base = config;
  if (base.auto_dt) {
    ScenarioConfig finest = config;
    finest.n_modes = mode_counts.back();
    base.stepper.dt = prepare(finest).stepper.dt;
    base.auto_dt = false;
  }

  std::vector<Trajectory> runs;
  for (std::size_t n : mode_counts) {
    ScenarioConfig c = base;
    c.n_modes = n;
    PreparedScenario prep = prepare(c);
    runs.push_back(simulate(prep.stepper, c.params, prep.basis, prep.initial, c.t_end, c.record_every, c.state_stride));
  }

  std::vector<ConvergenceRow> rows;
  for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
    const Trajectory& a = runs[i];
    const Trajectory& b = runs[i + 1];
    ConvergenceRow row;
    row.n_coarse = mode_counts[i];
    row.n_fine = mode_counts[i + 1];
    for (std::size_t r = 0; r < std::min(a.records.size(), b.records.size()); ++r) {
      row.energy_discrepancy = std::max(row.energy_discrepancy, std::abs(a.records[r].E - b.records[r].E));
    }
    const ModalState& sa = a.states.back();
    const ModalState& sb = b.states.back();
    double acc = 0.0;
    for (std::size_t k = 0; k < sa.size(); ++k) {
      acc += (sa.h[k] - sb.h[k]) * (sa.h[k] - sb.h[k]) + (sa.v[k] - sb.v[k]) * (sa.v[k] - sb.v[k]) +
             (sa.c[k] - sb.c[k]) * (sa.c[k] - sb.c[k]);
    }
    row.terminal_discrepancy = std::sqrt(acc);
    rows.push_back(row);
  }
  return rows;
}

UniquenessReport uniqueness_probe(const ScenarioConfig& config, double epsilon) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("epsilon must be finite and >= 0");
  UniquenessReport rep;
  rep.epsilon = epsilon;

  PreparedScenario prep = prepare(config);
  const Trajectory base = simulate(prep.stepper, config.params, prep.basis, prep.initial, config.t_end,
                                   config.record_every, 1);
  ModalState perturbed = prep.initial;
  perturbed.h[0] += epsilon;

  Trajectory other = base;
  try {
    other = simulate(prep.stepper, config.params, prep.basis, perturbed, config.t_end, config.record_every, 1);
  } catch (const SolverDivergence& e) {
    rep.completed = false;
    rep.estar_breach = true;
    rep.message = std::string("perturbed run diverged: ") + e.what();
    return rep;
  } catch (const NumericFault& e) {
    rep.completed = false;
    rep.estar_breach = true;
    rep.message = std::string("perturbed run produced non-finite values: ") + e.what();
    return rep;
  }

  const EstarBound monitor = estar_bound_monitor(other);
  rep.estar_breach = monitor.breach;

  const ModelParams& p = config.params;
  rep.bit_identical = true;
  for (std::size_t i = 0; i < base.states.size(); ++i) {
    const ModalState& a = base.states[i];
    const ModalState& b = other.states[i];
    if (a.h != b.h || a.v != b.v || a.c != b.c) rep.bit_identical = false;
    const double phi = kirchhoff_coefficient(p, grad_norm_sq(prep.basis, a.h));
    double dv = 0.0;
    double dh = 0.0;
    double dc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      dv += (a.v[k] - b.v[k]) * (a.v[k] - b.v[k]);
      dh += prep.basis.lambda(k) * (a.h[k] - b.h[k]) * (a.h[k] - b.h[k]);
      dc += (a.c[k] - b.c[k]) * (a.c[k] - b.c[k]);
    }
    rep.max_difference = std::max(rep.max_difference, std::sqrt(dv + phi * dh + p.coupling_ratio() * dc));
  }
  rep.ratio = epsilon > 0.0 ? rep.max_difference / epsilon : 0.0;
  rep.message = rep.estar_breach ? "E* bound horizon falls inside the run: data may be outside the small-data regime"
                                 : "ok";
  return rep;
}

SweepGrid parse_grid(const json& doc) {
  require_object(doc, "grid");
  reject_unknown_keys(doc, "grid", {"m1", "alpha", "beta", "n_modes", "scales"});
  SweepGrid g;
  auto numbers = [&](const char* key, std::vector<double>& out) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_array()) throw ConfigError(std::string("grid.") + key, "expected an array");
    for (std::size_t i = 0; i < doc[key].size(); ++i) {
      out.push_back(read_number(doc[key][i], std::string("grid.") + key + "[" + std::to_string(i) + "]"));
    }
  };
  numbers("m1", g.m1);
  numbers("alpha", g.alpha);
  numbers("beta", g.beta);
  numbers("scales", g.scales);
  if (doc.contains("n_modes")) {
    if (!doc["n_modes"].is_array()) throw ConfigError("grid.n_modes", "expected an array");
    for (std::size_t i = 0; i < doc["n_modes"].size(); ++i) {
      const std::size_t n = read_count(doc["n_modes"][i], "grid.n_modes[" + std::to_string(i) + "]");
      if (n == 0) throw ConfigError("grid.n_modes", "mode counts must be positive");
      g.n_modes.push_back(n);
    }
  }
  return g;
}

namespace {

SweepCell run_cell(const ScenarioConfig& base, double m1, double alpha, double beta, std::size_t n_modes,
                   double scale) {
  SweepCell cell{.m1 = m1, .alpha = alpha, .beta = beta, .n_modes = n_modes, .scale = scale};
  try {
    ScenarioConfig c = with_params(base, m1, alpha, beta);
    c.n_modes = n_modes;
    c.data_scale = base.data_scale * scale;
    const ScenarioResult res = execute(c);
    cell.energy_monotone = res.diagnostics.energy_monotone;
    if (!res.diagnostics.decay_fit) throw InvalidArgument(res.diagnostics.decay_fit_error);
    cell.omega = res.diagnostics.decay_fit->omega;
    cell.r_squared = res.diagnostics.decay_fit->r_squared;
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
  return cell;
}

template <class Job>
void run_parallel(std::size_t count, unsigned threads, Job job) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) job(i);
    });
  }
}

}  // namespace

SweepResult sweep(const ScenarioConfig& base, const SweepGrid& grid, unsigned threads) {
  const std::vector<double> m1s = grid.m1.empty() ? std::vector<double>{base.params.m1()} : grid.m1;
  const std::vector<double> alphas = grid.alpha.empty() ? std::vector<double>{base.params.alpha()} : grid.alpha;
  const std::vector<double> betas = grid.beta.empty() ? std::vector<double>{base.params.beta()} : grid.beta;
  const std::vector<std::size_t> modes = grid.n_modes.empty() ? std::vector<std::size_t>{base.n_modes} : grid.n_modes;

  struct Point4 {
    double m1, alpha, beta;
    std::size_t n;
  };
  std::vector<Point4> points;
  for (double m1 : m1s)
    for (double a : alphas)
      for (double b : betas)
        for (std::size_t n : modes) points.push_back({m1, a, b, n});

  SweepResult out;
  out.cells.resize(points.size());
  out.scaled.resize(grid.scales.size());
  const std::size_t total = points.size() + grid.scales.size();
  run_parallel(total, threads, [&](std::size_t i) {
    if (i < points.size()) {
      const Point4& p = points[i];
      out.cells[i] = run_cell(base, p.m1, p.alpha, p.beta, p.n, 1.0);
    } else {
      const std::size_t j = i - points.size();
      out.scaled[j] = run_cell(base, base.params.m1(), base.params.alpha(), base.params.beta(), base.n_modes,
                               grid.scales[j]);
    }
  });
  return out;
}

void write_sweep_csv(const std::vector<SweepCell>& cells, std::ostream& out) {
  out << "m1,alpha,beta,n_modes,scale,ok,omega,r_squared,energy_monotone,error\n";
  for (const auto& c : cells) {
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << format_double(c.m1) << ',' << format_double(c.alpha) << ',' << format_double(c.beta) << ',' << c.n_modes
        << ',' << format_double(c.scale) << ',' << (c.ok ? 1 : 0) << ',' << format_double(c.omega) << ','
        << format_double(c.r_squared) << ',' << (c.energy_monotone ? 1 : 0) << ',' << err << '\n';
  }
}

std::vector<CheckResult> verify(const ScenarioConfig& config) {
  std::vector<CheckResult> checks;
  auto add = [&](std::string name, bool passed, std::string detail, bool info = false) {
    checks.push_back({std::move(name), passed, info, std::move(detail)});
  };
  auto fmt = [](double x) {
    std::ostringstream s;
    s.precision(4);
    s << x;
    return s.str();
  };

  const PreparedScenario prep = prepare(config);
  const ModelParams& params = config.params;
  auto run = [&](const ModelParams& p, const ModalState& init, double dt) {
    StepperConfig s = prep.stepper;
    s.dt = dt;
    return simulate(s, p, prep.basis, init, config.t_end, config.record_every, 1);
  };
  const double dt = prep.stepper.dt;
  const Trajectory traj = run(params, prep.initial, dt);
  const Trajectory half = run(params, prep.initial, 0.5 * dt);
  const double e0 = traj.records.front().E;

  {
    const Trajectory zero = run(params, ModalState::zero(prep.basis.size()), dt);
    bool exact = true;
    for (const auto& r : zero.records) exact = exact && r.E == 0.0 && r.E_star == 0.0 && r.D == 0.0;
    for (const auto& s : zero.states) {
      for (std::size_t k = 0; k < s.size(); ++k) exact = exact && s.h[k] == 0.0 && s.v[k] == 0.0 && s.c[k] == 0.0;
    }
    add("zero_data_exact", exact, "zero initial data stay identically zero");
  }
  {
    const double inc = max_energy_increment(traj);
    add("energy_monotone", inc <= 1e-9 * e0, "max increment / E0 = " + fmt(e0 > 0 ? inc / e0 : inc));
  }
  {
    const AprioriCheck a = first_apriori_check(traj, 1e-8 * e0);
    add("first_apriori_estimate", a.holds, "worst margin = " + fmt(a.worst_margin));
  }
  {
    const DissipationIdentityCheck c1 = dissipation_identity_check(traj);
    const DissipationIdentityCheck c2 = dissipation_identity_check(half);
    const double ratio = c2.max_abs_error > 0.0 ? c1.max_abs_error / c2.max_abs_error : 4.0;
    add("dissipation_identity", c1.relative_error <= 1e-4, "relative error = " + fmt(c1.relative_error));
    add("dissipation_identity_order", e0 == 0.0 || std::abs(ratio - 4.0) <= 1.2,
        "error ratio dt/(dt/2) = " + fmt(ratio));
  }
  {
    const double r1 = energy_balance_residual(traj);
    const double r2 = energy_balance_residual(half);
    const double order = (r1 > 0.0 && r2 > 0.0) ? std::log2(r1 / r2) : 2.0;
    add("energy_balance_order", e0 == 0.0 || std::abs(order - 2.0) <= 0.3, "observed order = " + fmt(order));
  }
  {
    ModalState flipped_init = prep.initial;
    for (double& c : flipped_init.c) c = -c;
    const ModelParams flipped(params.m0(), params.m1(), -params.alpha(), -params.beta());
    const Trajectory f = run(flipped, flipped_init, dt);
    double worst = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
      const ModalState& a = traj.states[i];
      const ModalState& b = f.states[i];
      for (std::size_t k = 0; k < a.size(); ++k) {
        worst = std::max({worst, std::abs(a.h[k] - b.h[k]), std::abs(a.v[k] - b.v[k]), std::abs(a.c[k] + b.c[k])});
        scale = std::max({scale, std::abs(a.h[k]), std::abs(a.v[k]), std::abs(a.c[k])});
      }
    }
    double e_worst = 0.0;
    for (std::size_t i = 0; i < traj.records.size(); ++i) {
      e_worst = std::max(e_worst, std::abs(traj.records[i].E - f.records[i].E));
    }
    add("sign_flip_invariance", worst <= 1e-12 * std::max(1.0, scale) && e_worst <= 1e-12 * std::max(1.0, e0),
        "max state deviation = " + fmt(worst));
  }
  {
    ModalState probe = prep.initial;
    const ModalRate r = rhs(params, prep.basis, probe);
    // <grad E, rhs> in modal form.
    const double s = grad_norm_sq(prep.basis, probe.h);
    double de = 0.0;
    for (std::size_t k = 0; k < probe.size(); ++k) {
      const double lam = prep.basis.lambda(k);
      de += probe.v[k] * r.dv[k] + (params.m0() + params.m1() * s) * lam * probe.h[k] * r.dh[k] +
            params.coupling_ratio() * probe.c[k] * r.dc[k];
    }
    const double d = dissipation_rate(params, prep.basis, probe);
    add("rhs_dissipation_identity", std::abs(de - d) <= 1e-10 * std::max(1.0, std::abs(d)),
        "|<grad E, rhs> - D| = " + fmt(std::abs(de - d)));
  }
  {
    bool ok = false;
    std::string detail;
    try {
      const DecayFit fit = fit_exponential_decay(traj.records, default_fit_window(traj.records.back().t));
      ok = fit.r_squared >= 0.99 && fit.omega > 0.0;
      detail = "omega = " + fmt(fit.omega) + ", r^2 = " + fmt(fit.r_squared);
    } catch (const InvalidArgument& e) {
      detail = e.what();
    }
    add("exponential_decay_fit", ok, detail);
  }
  {
    const EstarBound m = estar_bound_monitor(traj);
    add("estar_bound_horizon", !m.breach,
        "C_emp = " + fmt(m.C_emp) + ", horizon = " + (m.horizon ? fmt(*m.horizon) : std::string("none")), true);
  }
  {
    const auto& recs = traj.records;
    const double h = recs[1].t - recs[0].t;
    std::size_t n = recs.size();
    if (n > 2 && std::abs((recs[n - 1].t - recs[n - 2].t) - h) > 1e-9 * h) --n;
    std::vector<double> es;
    for (std::size_t i = 0; i < n; ++i) es.push_back(recs[i].E);
    try {
      const MartinezCheck m = check_martinez(es, h, 0.0, 1e-9);
      add("integral_decay_lemma", m.hypothesis_ok, "omega_est = " + fmt(m.omega_est) + " (" + m.note + ")", true);
    } catch (const InvalidArgument& e) {
      add("integral_decay_lemma", false, e.what(), true);
    }
  }
  return checks;
}

ScenarioConfig random_small_data_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Portable uniform draws: 53 random bits mapped to [0, 1).
  auto uniform = [&](double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  };
  ScenarioConfig c;
  c.name = "random_" + std::to_string(seed);
  c.seed = seed;
  const bool rectangle = uniform(0.0, 1.0) < 0.25;
  c.domain = rectangle ? Domain::rectangle(uniform(2.0, 4.0), uniform(2.0, 4.0)) : Domain::interval(uniform(2.0, 4.0));
  c.n_modes = 2 + static_cast<std::size_t>(uniform(0.0, 11.0));
  const double sign = uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  c.params = ModelParams(uniform(0.5, 2.0), uniform(0.0, 1.0), sign * uniform(0.5, 2.0), sign * uniform(0.5, 2.0));
  std::vector<double> h(c.n_modes);
  std::vector<double> v(c.n_modes);
  std::vector<double> th(c.n_modes);
  for (std::size_t k = 0; k < c.n_modes; ++k) {
    const double w = 1.0 / static_cast<double>(k + 1);
    h[k] = 0.2 * w * w * uniform(-1.0, 1.0);
    v[k] = 0.2 * w * uniform(-1.0, 1.0);
    th[k] = 0.2 * w * uniform(-1.0, 1.0);
  }
  c.y0 = {ProfileSpec::Kind::coefficients, 1, 0.0, h};
  c.y1 = {ProfileSpec::Kind::coefficients, 1, 0.0, v};
  c.theta0 = {ProfileSpec::Kind::coefficients, 1, 0.0, th};
  // Default stepper (midpoint, dt = 1e-3): the a-priori margin equals twice the
  // scheme's O(dt^2) balance defect, which the coarser auto step pushes past 1e-8 E(0).
  c.t_end = 5.0;
  c.record_every = 1;
  return c;
}

}  // namespace kheat
