#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "kheat/diagnostics.hpp"
#include "kheat/model.hpp"
#include "kheat/spectrum.hpp"

namespace kheat {

enum class Method { implicit_midpoint, rk4 };

Method parse_method(std::string_view name);
std::string_view method_name(Method m);

struct StepperConfig {
  Method method = Method::implicit_midpoint;
  double dt = 1e-3;
  double newton_tol = 1e-13;  // relative change of phi
  int newton_max_iter = 50;

  /// dt > 0, newton_tol > 0, newton_max_iter > 0, and dt * lambda_max <= 2.5 for rk4.
  void validate(const EigenBasis& basis) const;
};

/// 0.1 / sqrt(phi(S0) * lambda_max): resolves the fastest Kirchhoff oscillation.
double default_time_step(const ModelParams& params, const EigenBasis& basis, const ModalState& initial);

/// Recorded simulation output. records[i] always exists; states are kept on
/// every state_stride-th record plus the first and last.
struct Trajectory {
  ModelParams params;
  EigenBasis basis;
  double dt = 0.0;
  std::size_t steps = 0;
  std::size_t record_every = 1;
  std::vector<std::size_t> record_steps{};
  std::vector<EnergyRecord> records{};
  /// sum over steps up to each record of dt * D((x_n + x_{n+1}) / 2).
  std::vector<double> dissipated{};
  std::vector<ModalState> states{};
  std::vector<std::size_t> state_records{};  // record index of each stored state
};

/// One step of size config.dt. Implicit midpoint solves
/// x1 = x0 + dt rhs((x0 + x1)/2) by fixed-point iteration on phi; rk4 is the
/// classical four-stage scheme. Throws SolverDivergence or NumericFault.
ModalState step(const StepperConfig& config, const ModelParams& params, const EigenBasis& basis,
                const ModalState& state);

/// Number of steps for [0, t_end]: ceil(t_end / dt) with a 1e-9 relative slack.
std::size_t step_count(double t_end, double dt);

/// Integrates from `initial` (taken at t = 0) to steps * dt >= t_end. Records at
/// step 0, every record_every-th step, and the final step. Errors from `step`
/// are rethrown with the failing time in the message.
Trajectory simulate(const StepperConfig& config, const ModelParams& params, const EigenBasis& basis,
                    const ModalState& initial, double t_end, std::size_t record_every,
                    std::size_t state_stride = 1);

}  // namespace kheat
