#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "kheat/diagnostics.hpp"
#include "kheat/errors.hpp"
#include "kheat/timeloop.hpp"

using namespace kheat;
using std::numbers::pi;

namespace {

ModalState bump_state(const EigenBasis& b, double amp) {
  ModalState s = ModalState::zero(b.size());
  for (std::size_t k = 0; k < b.size(); k += 2) s.h[k] = amp / std::pow(static_cast<double>(k + 1), 3);
  return s;
}

std::vector<EnergyRecord> synthetic(double dt, std::size_t n, double (*e)(double)) {
  std::vector<EnergyRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].t = dt * static_cast<double>(i);
    out[i].E = e(out[i].t);
  }
  return out;
}

}  // namespace

TEST_CASE("energy components on worked examples") {
  const auto b1 = build_basis(Domain::interval(pi), 1);
  const ModelParams p(1.0, 0.5, 1.0, 1.0);
  ModalState s = ModalState::zero(1);
  s.v[0] = std::sqrt(2.0);
  CHECK(energy(p, b1, s).E == doctest::Approx(1.0));
  CHECK(energy(p, b1, ModalState::zero(1)).E == 0.0);

  // h = v = c = 1 on lambda = 1: 1/2 + 1/2 + 1/8 + 1/2.
  s.h[0] = s.v[0] = s.c[0] = 1.0;
  const EnergyRecord r = energy(p, b1, s);
  CHECK(r.E == doctest::Approx(1.625));
  CHECK(r.kinetic == doctest::Approx(0.5));
  CHECK(r.potential_linear == doctest::Approx(0.5));
  CHECK(r.potential_kirchhoff == doctest::Approx(0.125));
  CHECK(r.thermal == doctest::Approx(0.5));
  CHECK(r.S == doctest::Approx(1.0));
  CHECK(r.E_star == doctest::Approx(1.0 + 1.5 + 1.0));
  CHECK(r.D == doctest::Approx(-1.0));

  // Square of side pi, lambda_1 = 2, h = 1, m1 = 1: S = 2, E = 1 + 1, E* = (1 + 2) * 4.
  const auto sq = build_basis(Domain::rectangle(pi, pi), 1);
  ModalState q = ModalState::zero(1);
  q.h[0] = 1.0;
  const EnergyRecord rq = energy(ModelParams(1.0, 1.0, 1.0, 1.0), sq, q);
  CHECK(rq.E == doctest::Approx(2.0));
  CHECK(rq.E_star == doctest::Approx(12.0));
}

TEST_CASE("dissipation rate") {
  const auto b = build_basis(Domain::interval(pi), 3);
  ModalState s = ModalState::zero(3);
  s.c[2] = 1.0;
  CHECK(dissipation_rate(ModelParams(1.0, 0.5, 2.0, 1.0), b, s) == doctest::Approx(-18.0));
  s.c[2] = 0.0;
  s.h[0] = 5.0;
  s.v[1] = 3.0;
  CHECK(dissipation_rate(ModelParams(1.0, 0.5, 2.0, 1.0), b, s) == 0.0);
  s.c[0] = 1.0;
  CHECK(dissipation_rate(ModelParams(1.0, 0.5, -4.0, -2.0), b, s) == doctest::Approx(-2.0));
}

TEST_CASE("higher energy") {
  const auto b = build_basis(Domain::interval(pi), 2);
  const ModelParams p(1.0, 0.5, 1.0, 1.0);
  CHECK(higher_energy(p, b, ModalState::zero(2)) == 0.0);
  ModalState s = ModalState::zero(2);
  s.v[0] = std::sqrt(2.0);
  CHECK(higher_energy(p, b, s) == doctest::Approx(2.0));
  s = ModalState::zero(2);
  s.c[1] = std::sqrt(0.5);  // lambda = 4
  CHECK(higher_energy(p, b, s) == doctest::Approx(2.0));
}

TEST_CASE("E* time derivative splits into production and thermal smoothing") {
  const auto b = build_basis(Domain::interval(pi), 6);
  const ModelParams p(1.2, 0.8, 0.6, 1.5);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  ModalState s = ModalState::zero(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) {
    s.h[k] = u(rng) / static_cast<double>(k + 1);
    s.v[k] = u(rng);
    s.c[k] = u(rng);
  }
  const ModalRate r = rhs(p, b, s);
  const double eps = 1e-6;
  auto shifted = [&](double a) {
    ModalState y = s;
    for (std::size_t k = 0; k < b.size(); ++k) {
      y.h[k] += a * r.dh[k];
      y.v[k] += a * r.dv[k];
      y.c[k] += a * r.dc[k];
    }
    return higher_energy(p, b, y);
  };
  const double fd = (shifted(eps) - shifted(-eps)) / (2 * eps);
  double lap_theta = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) lap_theta += b.lambda(k) * b.lambda(k) * s.c[k] * s.c[k];
  const double expect = higher_energy_production(p, b, s) - 2.0 * p.coupling_ratio() * lap_theta;
  CHECK(fd == doctest::Approx(expect).epsilon(1e-6));

  ModalState one = ModalState::zero(1);
  one.h[0] = one.v[0] = 1.0;
  CHECK(higher_energy_production(p, build_basis(Domain::interval(pi), 1), one) == doctest::Approx(2 * 0.8));
  CHECK(higher_energy_production(ModelParams(1.0, 0.0, 1.0, 1.0), b, s) == 0.0);
}

TEST_CASE("energy balance residual on records converges at second order") {
  const auto b = build_basis(Domain::interval(pi), 8);
  const ModelParams p(1.0, 0.5, 1.0, 1.0);
  const ModalState x = bump_state(b, 0.5);
  const double r1 = energy_balance_residual(simulate({.dt = 0.02}, p, b, x, 4.0, 1));
  const double r2 = energy_balance_residual(simulate({.dt = 0.01}, p, b, x, 4.0, 1));
  CHECK(r1 / r2 == doctest::Approx(4.0).epsilon(0.1));

  auto one = simulate({.dt = 0.02}, p, b, x, 4.0, 1);
  one.records.resize(1);
  CHECK_THROWS_AS(energy_balance_residual(one), InvalidArgument);
}

TEST_CASE("first a-priori estimate holds on a run and catches a corrupted record") {
  const auto b = build_basis(Domain::interval(pi), 8);
  const ModelParams p(1.0, 0.5, 1.0, 1.0);
  auto traj = simulate({.dt = 0.01}, p, b, bump_state(b, 0.5), 3.0, 5);
  const double e0 = traj.records[0].E;
  const AprioriCheck ok = first_apriori_check(traj, 1e-8 * e0);
  CHECK(ok.holds);
  CHECK(ok.worst_margin <= 1e-8 * e0);

  traj.records[1].E *= 2.0;
  const AprioriCheck bad = first_apriori_check(traj, 1e-8 * e0);
  CHECK_FALSE(bad.holds);
  CHECK(bad.worst_margin > 0.5 * e0);
}

TEST_CASE("exponential fit") {
  const auto exact = synthetic(0.1, 101, [](double t) { return std::exp(-0.3 * t); });
  const DecayFit fit = fit_exponential_decay(exact, default_fit_window(10.0));
  CHECK(fit.omega == doctest::Approx(0.3).epsilon(1e-10));
  CHECK(fit.C == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fit.decaying);
  CHECK(fit.window.t_lo == doctest::Approx(2.0));
  CHECK(fit.window.t_hi == doctest::Approx(8.0));

  const auto scaled = synthetic(0.1, 101, [](double t) { return 3.0 * std::exp(-0.3 * t); });
  CHECK(fit_exponential_decay(scaled, {2.0, 8.0}).C == doctest::Approx(1.0).epsilon(1e-10));

  const auto flat = synthetic(0.1, 101, [](double) { return 2.0; });
  const DecayFit f2 = fit_exponential_decay(flat, {2.0, 8.0});
  CHECK(f2.omega == 0.0);
  CHECK_FALSE(f2.decaying);

  const auto few = synthetic(1.0, 11, [](double t) { return std::exp(-t); });
  CHECK_THROWS_AS(fit_exponential_decay(few, {2.0, 8.0}), InvalidArgument);
}

TEST_CASE("modified Gronwall: f = 0 gives the constant bound") {
  const std::vector<double> G(50, 2.0);
  const std::vector<double> f(50, 0.0);
  const GronwallCheck c = check_modified_gronwall(G, f, 0.1, 2.0, 0.5);
  CHECK(c.holds);
  CHECK_FALSE(c.blowup_time.has_value());
  for (double b : c.bound) CHECK(b == doctest::Approx(2.0));
}

TEST_CASE("modified Gronwall: f = 1, r = 1 blows up at t = 1") {
  const std::size_t n = 201;
  const std::vector<double> G(n, 1.0);
  const std::vector<double> f(n, 1.0);
  const GronwallCheck c = check_modified_gronwall(G, f, 0.01, 1.0, 1.0);
  REQUIRE(c.blowup_time.has_value());
  CHECK(*c.blowup_time == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(c.holds);
  CHECK(c.bound[50] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::isinf(c.bound[150]));
}

TEST_CASE("modified Gronwall: the equality case matches an ODE solution") {
  // G' = f G^{r+1}, G(0) = K is the extremal function; B must reproduce it.
  const double r = 0.5;
  const double K = 1.0;
  const double h = 1e-3;
  const std::size_t n = 901;
  auto f = [](double t) { return 1.0 + std::sin(t); };
  auto rate = [&](double t, double g) { return f(t) * std::pow(g, r + 1.0); };
  std::vector<double> G(n);
  std::vector<double> fs(n);
  G[0] = K;
  for (std::size_t i = 0; i < n; ++i) fs[i] = f(h * static_cast<double>(i));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double t = h * static_cast<double>(i);
    const double k1 = rate(t, G[i]);
    const double k2 = rate(t + h / 2, G[i] + h / 2 * k1);
    const double k3 = rate(t + h / 2, G[i] + h / 2 * k2);
    const double k4 = rate(t + h, G[i] + h * k3);
    G[i + 1] = G[i] + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  const GronwallCheck c = check_modified_gronwall(G, fs, h, K, r, 1e-6);
  for (std::size_t i = 0; i < n; ++i) CHECK(c.bound[i] == doctest::Approx(G[i]).epsilon(1e-4));
  CHECK(c.hypothesis_holds);
  CHECK(c.holds);
  CHECK_FALSE(c.blowup_time.has_value());
}

TEST_CASE("modified Gronwall bound is monotone in K and f") {
  const std::size_t n = 100;
  std::vector<double> G(n, 0.5);
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = 0.3 + 0.1 * std::cos(0.1 * static_cast<double>(i));
  std::vector<double> f2 = f;
  for (double& x : f2) x *= 1.5;
  const auto base = check_modified_gronwall(G, f, 0.01, 1.0, 2.0);
  const auto bigger_k = check_modified_gronwall(G, f, 0.01, 1.3, 2.0);
  const auto bigger_f = check_modified_gronwall(G, f2, 0.01, 1.0, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(bigger_k.bound[i] >= base.bound[i]);
    CHECK(bigger_f.bound[i] >= base.bound[i]);
    if (i > 0) CHECK(base.bound[i] >= base.bound[i - 1]);
  }
}

TEST_CASE("modified Gronwall rejects bad input") {
  const std::vector<double> G{1.0, -0.1, 1.0};
  const std::vector<double> f{1.0, 1.0, 1.0};
  const std::vector<double> ok{1.0, 1.0, 1.0};
  const std::vector<double> short_f{1.0, 1.0};
  CHECK_THROWS_AS(check_modified_gronwall(G, f, 0.1, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(check_modified_gronwall(ok, short_f, 0.1, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(check_modified_gronwall(ok, f, 0.1, 0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(check_modified_gronwall(ok, f, 0.1, 1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(check_modified_gronwall(ok, f, 0.0, 1.0, 1.0), InvalidArgument);
}

TEST_CASE("Martinez: exponential decay with mu = 0") {
  const double h = 0.01;
  std::vector<double> E(3001);
  for (std::size_t i = 0; i < E.size(); ++i) E[i] = std::exp(-h * static_cast<double>(i));
  const MartinezCheck m = check_martinez(E, h, 0.0);
  CHECK(m.omega_est == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(m.tail_small);
  CHECK(m.bound_holds);
  CHECK(m.hypothesis_ok);
}

TEST_CASE("Martinez: polynomial decay with mu = 1/2") {
  const double h = 0.01;
  const double T = 999.0;
  const std::size_t n = static_cast<std::size_t>(std::llround(T / h)) + 1;
  std::vector<double> E(n);
  for (std::size_t i = 0; i < n; ++i) E[i] = std::pow(1.0 + h * static_cast<double>(i), -2.0);
  const MartinezCheck m = check_martinez(E, h, 0.5);
  // max_t of (1/2) (1 - ((1+t)/(1+T))^2), attained at t = 0.
  const double oracle = 0.5 * (1.0 - 1.0 / ((1.0 + T) * (1.0 + T)));
  CHECK(m.omega_est == doctest::Approx(oracle).epsilon(1e-4));
  CHECK(m.tail_small);
  CHECK(m.bound_holds);
}

TEST_CASE("Martinez: no decay is reported, increasing data is rejected") {
  const std::vector<double> flat(100, 1.0);
  const MartinezCheck m = check_martinez(flat, 0.1, 0.0);
  CHECK_FALSE(m.hypothesis_ok);
  CHECK_FALSE(m.tail_small);
  CHECK_FALSE(m.note.empty());

  const std::vector<double> up{1.0, 0.9, 1.1, 0.5};
  CHECK_THROWS_AS(check_martinez(up, 0.1, 0.0), InvalidArgument);
  CHECK_THROWS_AS(check_martinez(flat, 0.1, -1.0), InvalidArgument);
  CHECK_THROWS_AS(check_martinez(flat, 0.0, 0.0), InvalidArgument);
}

TEST_CASE("dissipation identity check and E* monitor on a small-data run") {
  const auto b = build_basis(Domain::interval(pi), 8);
  const ModelParams p(1.0, 0.5, 1.0, 1.0);
  const auto traj = simulate({.dt = 1e-3}, p, b, bump_state(b, 0.05), 4.0, 1);
  const DissipationIdentityCheck d = dissipation_identity_check(traj);
  CHECK(d.relative_error < 1e-4);
  CHECK(d.max_abs_rate > 0.0);
  CHECK(max_energy_increment(traj) <= 1e-12 * traj.records[0].E);

  const EstarBound e = estar_bound_monitor(traj);
  CHECK(e.estar0 == doctest::Approx(traj.records[0].E_star));
  CHECK(e.C_emp > 0.0);
  CHECK_FALSE(e.breach);
  CHECK(e.holds);
}
