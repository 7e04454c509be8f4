#include "kheat/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kheat/errors.hpp"
#include "kheat/timeloop.hpp"

namespace kheat {

EnergyRecord energy(const ModelParams& params, const EigenBasis& basis, const ModalState& state) {
  check_shape(basis, state);
  double vv = 0.0;
  double cc = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    vv += state.v[k] * state.v[k];
    cc += state.c[k] * state.c[k];
  }
  EnergyRecord rec;
  rec.t = state.t;
  rec.S = grad_norm_sq(basis, state.h);
  rec.kinetic = 0.5 * vv;
  rec.potential_linear = 0.5 * params.m0() * rec.S;
  rec.potential_kirchhoff = 0.25 * params.m1() * rec.S * rec.S;
  rec.thermal = 0.5 * params.coupling_ratio() * cc;
  rec.E = rec.kinetic + rec.potential_linear + rec.potential_kirchhoff + rec.thermal;
  rec.E_star = higher_energy(params, basis, state);
  rec.D = dissipation_rate(params, basis, state);
  return rec;
}

double dissipation_rate(const ModelParams& params, const EigenBasis& basis, const ModalState& state) {
  check_shape(basis, state);
  double acc = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) acc += basis.lambda(k) * state.c[k] * state.c[k];
  return -params.coupling_ratio() * acc + 0.0;  // no -0 in output
}

double higher_energy(const ModelParams& params, const EigenBasis& basis, const ModalState& state) {
  check_shape(basis, state);
  double grad_v = 0.0;
  double lap_h = 0.0;
  double grad_c = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const double lam = basis.lambda(k);
    grad_v += lam * state.v[k] * state.v[k];
    lap_h += lam * lam * state.h[k] * state.h[k];
    grad_c += lam * state.c[k] * state.c[k];
  }
  const double phi = kirchhoff_coefficient(params, grad_norm_sq(basis, state.h));
  return grad_v + phi * lap_h + params.coupling_ratio() * grad_c;
}

double higher_energy_production(const ModelParams& params, const EigenBasis& basis,
                                const ModalState& state) {
  check_shape(basis, state);
  double hv = 0.0;
  double lap_h = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const double lam = basis.lambda(k);
    hv += lam * state.h[k] * state.v[k];
    lap_h += lam * lam * state.h[k] * state.h[k];
  }
  return 2.0 * params.m1() * hv * lap_h;
}

double energy_balance_residual(const Trajectory& traj) {
  const auto& recs = traj.records;
  if (recs.size() < 2) throw InvalidArgument("energy balance needs at least 2 records");
  const double e0 = recs.front().E;
  double integral = 0.0;
  double worst = 0.0;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    integral += 0.5 * (recs[i].t - recs[i - 1].t) * (recs[i].D + recs[i - 1].D);
    worst = std::max(worst, std::abs(recs[i].E - e0 - integral));
  }
  return worst;
}

double discrete_balance_residual(const Trajectory& traj) {
  if (traj.records.empty()) throw InvalidArgument("empty trajectory");
  return std::abs(traj.records.back().E - traj.records.front().E - traj.dissipated.back());
}

AprioriCheck first_apriori_check(const Trajectory& traj, double tol) {
  AprioriCheck out;
  if (traj.records.empty()) return out;
  const double two_e0 = 2.0 * traj.records.front().E;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < traj.records.size(); ++i) {
    // 2E already equals |v|^2 + (m0 + m1/2 S) S + (alpha/beta)|c|^2;
    // -2 * dissipated is (2 alpha/beta) int |grad theta|^2.
    const double lhs = 2.0 * traj.records[i].E - 2.0 * traj.dissipated[i];
    worst = std::max(worst, lhs - two_e0);
  }
  out.worst_margin = worst;
  out.holds = worst <= tol;
  return out;
}

FitWindow default_fit_window(double t_end) { return {0.2 * t_end, 0.8 * t_end}; }

DecayFit fit_exponential_decay(std::span<const EnergyRecord> records, FitWindow window, double floor) {
  if (records.empty()) throw InvalidArgument("no records to fit");
  const double e0 = records.front().E;
  std::vector<double> ts;
  std::vector<double> ys;
  for (const auto& r : records) {
    if (r.t < window.t_lo || r.t > window.t_hi) continue;
    if (!(r.E > floor * e0) || !(r.E > 0.0)) continue;
    ts.push_back(r.t);
    ys.push_back(std::log(r.E));
  }
  if (ts.size() < 10) {
    throw InvalidArgument("decay fit needs at least 10 records above the energy floor in the window");
  }
  const auto n = static_cast<double>(ts.size());
  double tm = 0.0;
  double ym = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    tm += ts[i];
    ym += ys[i];
  }
  tm /= n;
  ym /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sxx += (ts[i] - tm) * (ts[i] - tm);
    sxy += (ts[i] - tm) * (ys[i] - ym);
    syy += (ys[i] - ym) * (ys[i] - ym);
  }
  if (sxx == 0.0) throw InvalidArgument("decay fit needs distinct times");
  // Equal samples: keep the slope exactly zero instead of a roundoff residue.
  const bool flat = std::all_of(ys.begin(), ys.end(), [&](double y) { return y == ys.front(); });
  const double slope = flat ? 0.0 : sxy / sxx;
  const double intercept = ym - slope * tm;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double e = ys[i] - (intercept + slope * ts[i]);
    ss_res += e * e;
  }

  DecayFit fit;
  fit.omega = -slope + 0.0;
  fit.C = std::exp(intercept) / e0;
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  fit.window = window;
  fit.samples = ts.size();
  fit.decaying = fit.omega > 0.0;
  return fit;
}

GronwallCheck check_modified_gronwall(std::span<const double> G, std::span<const double> f, double h,
                                      double K, double r, double tol) {
  if (G.size() != f.size()) throw InvalidArgument("G and f must share one grid");
  if (G.empty()) throw InvalidArgument("empty sample grid");
  if (!(K > 0.0) || !(r > 0.0) || !(h > 0.0)) throw InvalidArgument("need K > 0, r > 0 and h > 0");
  for (std::size_t i = 0; i < G.size(); ++i) {
    if (G[i] < 0.0 || f[i] < 0.0 || !std::isfinite(G[i]) || !std::isfinite(f[i])) {
      throw InvalidArgument("Gronwall samples must be finite and nonnegative");
    }
  }
  auto slack = [tol](double x) { return tol * std::max(1.0, std::abs(x)); };

  GronwallCheck out;
  out.bound.resize(G.size());
  const double base0 = std::pow(K, -r);
  double f_int = 0.0;
  double fg_int = 0.0;
  double prev_base = base0;
  bool blown = false;
  bool hypothesis = true;
  bool under = true;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < G.size(); ++i) {
    if (i > 0) {
      f_int += 0.5 * h * (f[i] + f[i - 1]);
      fg_int += 0.5 * h * (f[i] * std::pow(G[i], r + 1.0) + f[i - 1] * std::pow(G[i - 1], r + 1.0));
    }
    const double rhs = K + fg_int;
    if (G[i] > rhs + slack(rhs)) hypothesis = false;

    const double base = base0 - r * f_int;
    if (!blown && base <= 0.0) {
      blown = true;
      const double t_prev = static_cast<double>(i - 1) * h;
      out.blowup_time = t_prev + h * prev_base / (prev_base - base);
    }
    if (blown) {
      out.bound[i] = std::numeric_limits<double>::infinity();
      continue;
    }
    out.bound[i] = std::pow(base, -1.0 / r);
    worst = std::max(worst, G[i] - out.bound[i]);
    if (G[i] > out.bound[i] + slack(out.bound[i])) under = false;
    prev_base = base;
  }
  out.hypothesis_holds = hypothesis;
  out.holds = hypothesis && under;
  out.worst_excess = worst;
  return out;
}

MartinezCheck check_martinez(std::span<const double> E, double h, double mu, double tol) {
  if (E.size() < 2) throw InvalidArgument("Martinez check needs at least 2 samples");
  if (!(h > 0.0)) throw InvalidArgument("grid spacing must be positive");
  if (mu < 0.0) throw InvalidArgument("mu must be nonnegative");
  const double e0 = E.front();
  for (std::size_t i = 0; i < E.size(); ++i) {
    if (!(E[i] >= 0.0) || !std::isfinite(E[i])) throw InvalidArgument("energy samples must be finite and >= 0");
    if (i > 0 && E[i] - E[i - 1] > tol * e0) throw InvalidArgument("energy samples are increasing");
  }

  MartinezCheck out;
  out.tail_small = E.back() <= 1e-6 * e0;
  if (e0 == 0.0) {
    out.bound_holds = true;
    out.hypothesis_ok = true;
    out.note = "zero energy";
    return out;
  }

  // Tail integrals int_{t_i}^T E^{mu+1}, accumulated from the right.
  const std::size_t n = E.size();
  std::vector<double> tail(n, 0.0);
  for (std::size_t i = n - 1; i-- > 0;) {
    tail[i] = tail[i + 1] + 0.5 * h * (std::pow(E[i], mu + 1.0) + std::pow(E[i + 1], mu + 1.0));
  }
  const double scale = std::pow(e0, mu);
  double omega = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (E[i] > 0.0) omega = std::max(omega, tail[i] / (scale * E[i]));
  }
  out.omega_est = omega;

  bool holds = omega > 0.0;
  for (std::size_t i = 0; i < n && holds; ++i) {
    const double t = static_cast<double>(i) * h;
    const double envelope = mu == 0.0 ? e0 * std::exp(1.0 - t / omega)
                                      : e0 * std::pow((1.0 + mu) / (1.0 + mu * t / omega), 1.0 / mu);
    if (E[i] > envelope * (1.0 + 1e-12) + tol * e0) holds = false;
  }
  out.bound_holds = holds;
  out.hypothesis_ok = out.tail_small && holds;
  if (!out.tail_small) {
    out.note = "hypothesis fails: E(T) > 1e-6 E(0), the tail integral is not resolved (no decay or T too short)";
  } else if (!holds) {
    out.note = "envelope violated";
  } else {
    out.note = "ok";
  }
  return out;
}

EstarBound estar_bound_monitor(const Trajectory& traj) {
  EstarBound out;
  if (traj.records.empty()) return out;
  out.estar0 = traj.records.front().E_star;
  const double t_end = traj.records.back().t;

  for (const auto& s : traj.states) {
    const double es = higher_energy(traj.params, traj.basis, s);
    if (es > 0.0) {
      const double p = higher_energy_production(traj.params, traj.basis, s);
      out.C_emp = std::max(out.C_emp, std::abs(p) / std::pow(es, 1.5));
    }
  }
  if (out.estar0 == 0.0) {
    out.holds = std::all_of(traj.records.begin(), traj.records.end(),
                            [](const EnergyRecord& r) { return r.E_star == 0.0; });
    return out;
  }
  if (out.C_emp > 0.0) {
    out.horizon = 2.0 / (out.C_emp * std::sqrt(out.estar0));
    out.breach = *out.horizon <= t_end;
  }

  // Uniformly spaced prefix of the records.
  std::size_t n = traj.records.size();
  if (n >= 3) {
    const double h0 = traj.records[1].t - traj.records[0].t;
    const double hl = traj.records[n - 1].t - traj.records[n - 2].t;
    if (std::abs(hl - h0) > 1e-9 * h0) --n;
  }
  if (n < 2) {
    out.holds = true;
    return out;
  }
  const double h = traj.records[1].t - traj.records[0].t;
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = traj.records[i].E_star;
  if (out.C_emp == 0.0) {
    // No production: E* can only decrease.
    out.holds = std::all_of(g.begin(), g.end(), [&](double x) { return x <= out.estar0 * (1.0 + 1e-9); });
    return out;
  }
  const std::vector<double> f(n, out.C_emp);
  const GronwallCheck check = check_modified_gronwall(g, f, h, out.estar0, 0.5, 1e-6);
  out.holds = check.holds;
  return out;
}

DissipationIdentityCheck dissipation_identity_check(const Trajectory& traj) {
  const auto& recs = traj.records;
  if (recs.size() < 3) throw InvalidArgument("dissipation identity check needs at least 3 records");
  DissipationIdentityCheck out;
  for (std::size_t i = 1; i + 1 < recs.size(); ++i) {
    const double left = recs[i].t - recs[i - 1].t;
    const double right = recs[i + 1].t - recs[i].t;
    if (std::abs(left - right) > 1e-9 * left) continue;
    const double fd = (recs[i + 1].E - recs[i - 1].E) / (left + right);
    out.max_abs_error = std::max(out.max_abs_error, std::abs(fd - recs[i].D));
    out.max_abs_rate = std::max(out.max_abs_rate, std::abs(recs[i].D));
  }
  out.relative_error = out.max_abs_rate > 0.0 ? out.max_abs_error / out.max_abs_rate : out.max_abs_error;
  return out;
}

double max_energy_increment(const Trajectory& traj) {
  if (traj.records.size() < 2) return 0.0;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < traj.records.size(); ++i) {
    worst = std::max(worst, traj.records[i].E - traj.records[i - 1].E);
  }
  return worst;
}

}  // namespace kheat
