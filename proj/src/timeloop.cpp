#include "kheat/timeloop.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "kheat/errors.hpp"

namespace kheat {

Method parse_method(std::string_view name) {
  if (name == "implicit_midpoint" || name == "midpoint") return Method::implicit_midpoint;
  if (name == "rk4") return Method::rk4;
  throw InvalidArgument("unknown time integrator '" + std::string(name) + "'");
}

std::string_view method_name(Method m) {
  return m == Method::rk4 ? "rk4" : "implicit_midpoint";
}

void StepperConfig::validate(const EigenBasis& basis) const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
  if (!(newton_tol > 0.0)) throw InvalidArgument("newton_tol must be positive");
  if (newton_max_iter < 1) throw InvalidArgument("newton_max_iter must be at least 1");
  if (method == Method::rk4 && dt * basis.max_lambda() > 2.5) {
    std::ostringstream msg;
    msg << "rk4 stability guard violated: dt * lambda_max = " << dt * basis.max_lambda() << " > 2.5";
    throw InvalidArgument(msg.str());
  }
}

double default_time_step(const ModelParams& params, const EigenBasis& basis, const ModalState& initial) {
  const double phi = kirchhoff_coefficient(params, grad_norm_sq(basis, initial.h));
  return 0.1 / std::sqrt(phi * basis.max_lambda());
}

std::size_t step_count(double t_end, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (!(t_end >= dt * (1.0 - 1e-9))) throw InvalidArgument("t_end must be at least dt");
  const double ratio = t_end / dt;
  return static_cast<std::size_t>(std::ceil(ratio - 1e-9 * ratio));
}

namespace {

// Midpoint state of the linear per-mode system with phi frozen:
// (I - tau A_k(phi)) x_m = x_0, tau = dt / 2, solved in closed form.
void midpoint_solve(const ModelParams& params, const EigenBasis& basis, const ModalState& x0, double tau,
                    double phi, ModalState& xm) {
  const double alpha = params.alpha();
  const double beta = params.beta();
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const double lam = basis.lambda(k);
    const double heat = 1.0 + tau * lam;
    const double denom = 1.0 + tau * tau * phi * lam + tau * tau * alpha * beta * lam * lam / heat;
    const double vm = (x0.v[k] - tau * phi * lam * x0.h[k] + tau * alpha * lam * x0.c[k] / heat) / denom;
    xm.v[k] = vm;
    xm.h[k] = x0.h[k] + tau * vm;
    xm.c[k] = (x0.c[k] - tau * beta * lam * vm) / heat;
  }
}

ModalState midpoint_step(const StepperConfig& config, const ModelParams& params, const EigenBasis& basis,
                         const ModalState& x0) {
  const double tau = 0.5 * config.dt;
  ModalState xm = ModalState::zero(basis.size());

  // Residual of the scalar fixed-point problem phi = phi(S(h_m(phi))).
  auto residual = [&](double phi) {
    midpoint_solve(params, basis, x0, tau, phi, xm);
    return kirchhoff_coefficient(params, grad_norm_sq(basis, xm.h)) - phi;
  };
  auto converged = [&](double change, double phi) { return std::abs(change) <= config.newton_tol * phi; };

  double phi = kirchhoff_coefficient(params, grad_norm_sq(basis, x0.h));
  double change = 0.0;
  bool done = false;
  for (int it = 0; it < config.newton_max_iter; ++it) {
    change = residual(phi);
    if (!std::isfinite(change)) break;
    phi += change;
    if (converged(change, phi)) {
      done = true;
      break;
    }
  }

  if (!done) {
    // Secant fallback on the same scalar equation.
    double p0 = kirchhoff_coefficient(params, grad_norm_sq(basis, x0.h));
    double r0 = residual(p0);
    double p1 = p0 + r0;
    for (int it = 0; it < config.newton_max_iter && std::isfinite(r0); ++it) {
      const double r1 = residual(p1);
      change = r1;
      if (!std::isfinite(r1)) break;
      if (converged(r1, p1)) {
        phi = p1;
        done = true;
        break;
      }
      const double slope = (r1 - r0) / (p1 - p0);
      if (slope == 0.0 || !std::isfinite(slope)) break;
      p0 = p1;
      r0 = r1;
      p1 = std::max(params.m0(), p1 - r1 / slope);
    }
  }
  if (!done) {
    throw SolverDivergence("implicit midpoint iteration did not converge", std::abs(change), x0.t);
  }

  midpoint_solve(params, basis, x0, tau, phi, xm);
  ModalState x1 = ModalState::zero(basis.size(), x0.t + config.dt);
  for (std::size_t k = 0; k < basis.size(); ++k) {
    x1.h[k] = 2.0 * xm.h[k] - x0.h[k];
    x1.v[k] = 2.0 * xm.v[k] - x0.v[k];
    x1.c[k] = 2.0 * xm.c[k] - x0.c[k];
  }
  return x1;
}

ModalState axpy(const ModalState& x, double a, const ModalRate& r) {
  ModalState y = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    y.h[k] += a * r.dh[k];
    y.v[k] += a * r.dv[k];
    y.c[k] += a * r.dc[k];
  }
  return y;
}

ModalState rk4_step(const StepperConfig& config, const ModelParams& params, const EigenBasis& basis,
                    const ModalState& x0) {
  const double dt = config.dt;
  const ModalRate k1 = rhs(params, basis, x0);
  const ModalRate k2 = rhs(params, basis, axpy(x0, 0.5 * dt, k1));
  const ModalRate k3 = rhs(params, basis, axpy(x0, 0.5 * dt, k2));
  const ModalRate k4 = rhs(params, basis, axpy(x0, dt, k3));
  ModalState x1 = x0;
  x1.t = x0.t + dt;
  const double w = dt / 6.0;
  for (std::size_t k = 0; k < x0.size(); ++k) {
    x1.h[k] += w * (k1.dh[k] + 2.0 * k2.dh[k] + 2.0 * k3.dh[k] + k4.dh[k]);
    x1.v[k] += w * (k1.dv[k] + 2.0 * k2.dv[k] + 2.0 * k3.dv[k] + k4.dv[k]);
    x1.c[k] += w * (k1.dc[k] + 2.0 * k2.dc[k] + 2.0 * k3.dc[k] + k4.dc[k]);
  }
  return x1;
}

double midpoint_dissipation(const ModelParams& params, const EigenBasis& basis, const ModalState& a,
                            const ModalState& b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const double cm = 0.5 * (a.c[k] + b.c[k]);
    acc += basis.lambda(k) * cm * cm;
  }
  return -params.coupling_ratio() * acc;
}

}  // namespace

ModalState step(const StepperConfig& config, const ModelParams& params, const EigenBasis& basis,
                const ModalState& state) {
  check_shape(basis, state);
  if (!state.is_finite()) throw NumericFault("non-finite state entering step");
  ModalState next = config.method == Method::rk4 ? rk4_step(config, params, basis, state)
                                                 : midpoint_step(config, params, basis, state);
  if (!next.is_finite()) throw NumericFault("non-finite state produced by step");
  return next;
}

Trajectory simulate(const StepperConfig& config, const ModelParams& params, const EigenBasis& basis,
                    const ModalState& initial, double t_end, std::size_t record_every,
                    std::size_t state_stride) {
  config.validate(basis);
  check_shape(basis, initial);
  if (!initial.is_finite()) throw NumericFault("non-finite initial data");
  if (record_every == 0) throw InvalidArgument("record_every must be positive");
  if (state_stride == 0) throw InvalidArgument("state_stride must be positive");

  const std::size_t steps = step_count(t_end, config.dt);
  Trajectory traj{.params = params, .basis = basis};
  traj.dt = config.dt;
  traj.steps = steps;
  traj.record_every = record_every;
  const std::size_t n_records = 1 + steps / record_every + (steps % record_every != 0 ? 1 : 0);
  traj.records.reserve(n_records);
  traj.record_steps.reserve(n_records);
  traj.dissipated.reserve(n_records);

  ModalState x = initial;
  x.t = 0.0;
  double dissipated = 0.0;

  auto record = [&](std::size_t n, const ModalState& s) {
    const std::size_t idx = traj.records.size();
    traj.records.push_back(energy(params, basis, s));
    traj.record_steps.push_back(n);
    traj.dissipated.push_back(dissipated);
    if (idx % state_stride == 0 || n == steps) {
      traj.states.push_back(s);
      traj.state_records.push_back(idx);
    }
  };
  record(0, x);

  for (std::size_t n = 1; n <= steps; ++n) {
    ModalState next;
    try {
      next = step(config, params, basis, x);
    } catch (const SolverDivergence& e) {
      std::ostringstream msg;
      msg << e.what() << " at t = " << x.t << " (residual " << e.residual() << ")";
      throw SolverDivergence(msg.str(), e.residual(), x.t);
    } catch (const NumericFault& e) {
      std::ostringstream msg;
      msg << e.what() << " at t = " << x.t;
      throw NumericFault(msg.str());
    }
    next.t = static_cast<double>(n) * config.dt;
    dissipated += config.dt * midpoint_dissipation(params, basis, x, next);
    x = std::move(next);
    if (n % record_every == 0 || n == steps) record(n, x);
  }
  return traj;
}

}  // namespace kheat
