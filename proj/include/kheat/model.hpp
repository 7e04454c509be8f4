#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "kheat/spectrum.hpp"

namespace kheat {

/// Coefficients of the coupled Kirchhoff-heat system
///
///   y_tt - phi(|grad y|^2) Lap y + alpha Lap theta = 0,
///   theta_t - Lap theta - beta Lap y_t = 0,
///
/// with phi(s) = m0 + m1 s. Validated on construction: m0 > 0, m1 >= 0,
/// alpha and beta nonzero with the same sign.
class ModelParams {
public:
  ModelParams(double m0, double m1, double alpha, double beta);

  double m0() const { return m0_; }
  double m1() const { return m1_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  /// alpha / beta, the weight of the thermal energy.
  double coupling_ratio() const { return alpha_ / beta_; }

  /// m1 == 0: the system is linear and has a closed-form modal oracle.
  bool linear_mode() const { return m1_ == 0.0; }

private:
  double m0_;
  double m1_;
  double alpha_;
  double beta_;
};

/// Galerkin coefficients at one instant: displacement h, velocity v = h',
/// temperature c.
struct ModalState {
  double t = 0.0;
  std::vector<double> h;
  std::vector<double> v;
  std::vector<double> c;

  static ModalState zero(std::size_t n_modes, double t = 0.0);
  std::size_t size() const { return h.size(); }
  bool is_finite() const;
};

/// Time derivative of a ModalState.
struct ModalRate {
  std::vector<double> dh;
  std::vector<double> dv;
  std::vector<double> dc;
};

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// phi(s) = m0 + m1 s. Throws InvalidArgument for s < 0.
double kirchhoff_coefficient(const ModelParams& params, double s);

/// |grad y|^2 in modal form: sum_k lambda_k h_k^2.
double grad_norm_sq(const EigenBasis& basis, std::span<const double> h);

/// Throws InvalidArgument unless h, v, c all match the basis size.
void check_shape(const EigenBasis& basis, const ModalState& state);

/// Galerkin right-hand side (Lap acts as -lambda_k):
///   dh_k = v_k
///   dv_k = -phi(S) lambda_k h_k + alpha lambda_k c_k
///   dc_k = -lambda_k c_k - beta lambda_k v_k
/// Throws NumericFault on non-finite input.
ModalRate rhs(const ModelParams& params, const EigenBasis& basis, const ModalState& state);

/// Single-mode system matrix for (h, v, c) when m1 == 0:
/// [0 1 0; -m0 lambda 0 alpha lambda; 0 -beta lambda -lambda].
/// Throws InvalidArgument when m1 != 0 or lambda <= 0.
Matrix3 linear_system_matrix(const ModelParams& params, double lambda);

}  // namespace kheat
