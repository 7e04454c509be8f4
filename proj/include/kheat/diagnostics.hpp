#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kheat/model.hpp"

namespace kheat {

struct Trajectory;

/// Energies of one modal state. All gradient-type integrals are evaluated in
/// modal form (sum of lambda-weighted squares), which is exact for the basis.
struct EnergyRecord {
  double t = 0.0;
  double E = 0.0;       // first-order energy
  double E_star = 0.0;  // higher-order energy
  double D = 0.0;       // dE/dt = -(alpha/beta) |grad theta|^2
  double kinetic = 0.0;
  double potential_linear = 0.0;
  double potential_kirchhoff = 0.0;
  double thermal = 0.0;
  double S = 0.0;  // |grad y|^2
};

/// E = 1/2 |v|^2 + m0/2 S + m1/4 S^2 + alpha/(2 beta) |c|^2, with components.
/// E_star and D are filled too.
EnergyRecord energy(const ModelParams& params, const EigenBasis& basis, const ModalState& state);

/// -(alpha/beta) sum_k lambda_k c_k^2.
double dissipation_rate(const ModelParams& params, const EigenBasis& basis, const ModalState& state);

/// E* = sum lambda v^2 + (m0 + m1 S) sum lambda^2 h^2 + (alpha/beta) sum lambda c^2.
double higher_energy(const ModelParams& params, const EigenBasis& basis, const ModalState& state);

/// The growth term of E*: dE*/dt = P - (2 alpha/beta) |Lap theta|^2 with
/// P = 2 m1 (sum lambda h v)(sum lambda^2 h^2).
double higher_energy_production(const ModelParams& params, const EigenBasis& basis,
                                const ModalState& state);

/// max_i |E(t_i) - E(0) - int_0^{t_i} D| with the integral taken by the
/// trapezoid rule over records. Throws InvalidArgument for < 2 records.
double energy_balance_residual(const Trajectory& traj);

/// |E(T) - E(0) - sum_steps dt D(midpoint state)|, accumulated by the stepper.
double discrete_balance_residual(const Trajectory& traj);

struct AprioriCheck {
  bool holds = true;
  /// max over records of LHS - 2E(0); nonpositive when the estimate holds.
  double worst_margin = 0.0;
};

/// First a-priori estimate at every record:
///   |v|^2 + (m0 + m1/2 S) S + (alpha/beta)|c|^2 + (2 alpha/beta) int_0^t |grad theta|^2
///     <= 2 E(0) + tol.
/// The time integral is the stepper's per-step midpoint accumulation.
AprioriCheck first_apriori_check(const Trajectory& traj, double tol);

struct FitWindow {
  double t_lo = 0.0;
  double t_hi = 0.0;
};

/// [0.2 T, 0.8 T].
FitWindow default_fit_window(double t_end);

struct DecayFit {
  double C = 0.0;
  double omega = 0.0;
  double r_squared = 0.0;
  FitWindow window;
  std::size_t samples = 0;
  bool decaying = false;  // false flags "no decay" (omega <= 0)
};

/// Least-squares line through (t, log E) for records inside the window with
/// E > floor * E(0). E(0) is taken from the first record. omega = -slope,
/// C = exp(intercept) / E(0). Throws InvalidArgument for fewer than 10 samples.
DecayFit fit_exponential_decay(std::span<const EnergyRecord> records, FitWindow window,
                               double floor = 1e-12);

struct GronwallCheck {
  std::vector<double> bound;             // B(t_i); +inf from the blowup cell on
  std::optional<double> blowup_time;     // linear interpolation within the cell
  bool hypothesis_holds = false;         // G <= K + int f G^{r+1} (+tol)
  bool holds = false;                    // hypothesis and G <= B (+tol) before blowup
  double worst_excess = 0.0;             // max (G - B) before blowup
};

/// Modified Gronwall bound B(t) = (K^{-r} - r int_0^t f)^{-1/r} on a uniform
/// grid t_i = i*h, integrals by the trapezoid rule. tol is relative to
/// max(1, |value|). Throws InvalidArgument on negative samples, mismatched
/// lengths, K <= 0, r <= 0 or h <= 0.
GronwallCheck check_modified_gronwall(std::span<const double> G, std::span<const double> f, double h,
                                      double K, double r, double tol = 1e-9);

struct MartinezCheck {
  double omega_est = 0.0;
  bool tail_small = false;     // E(T) <= 1e-6 E(0): the finite tail approximates the true one
  bool bound_holds = false;    // envelope dominates every sample
  bool hypothesis_ok = false;  // tail_small && bound_holds
  std::string note;
};

/// Estimates omega = max_t int_t^T E^{mu+1} / (E(0)^mu E(t)) on a uniform grid
/// (trapezoid), then checks the decay envelope
///   mu = 0: E(0) exp(1 - t/omega)
///   mu > 0: E(0) ((1 + mu) / (1 + mu t / omega))^{1/mu}.
/// Throws InvalidArgument if the samples increase by more than tol * E(0),
/// or on mu < 0, h <= 0, fewer than 2 samples.
MartinezCheck check_martinez(std::span<const double> E, double h, double mu, double tol = 1e-12);

struct EstarBound {
  double C_emp = 0.0;  // max |P| / E*^{3/2}
  double estar0 = 0.0;
  std::optional<double> horizon;  // blowup time of the induced Gronwall bound
  bool breach = false;            // horizon falls inside the simulated interval
  bool holds = false;             // E* stays under the bound up to the horizon
};

/// Empirical E* Gronwall monitor: estimates C from the records, then checks
/// E*(t) <= (E*(0)^{-1/2} - C t / 2)^{-2} via check_modified_gronwall.
EstarBound estar_bound_monitor(const Trajectory& traj);

struct DissipationIdentityCheck {
  double max_abs_error = 0.0;
  double max_abs_rate = 0.0;
  double relative_error = 0.0;  // max_abs_error / max_abs_rate
};

/// Centered differences of recorded E against recorded D at interior records.
/// Throws InvalidArgument for fewer than 3 records.
DissipationIdentityCheck dissipation_identity_check(const Trajectory& traj);

/// Largest E(t_{i+1}) - E(t_i) over consecutive records.
double max_energy_increment(const Trajectory& traj);

}  // namespace kheat
