#include "kheat/model.hpp"

#include <algorithm>
#include <cmath>

#include "kheat/errors.hpp"

namespace kheat {

ModelParams::ModelParams(double m0, double m1, double alpha, double beta)
    : m0_(m0), m1_(m1), alpha_(alpha), beta_(beta) {
  if (!std::isfinite(m0) || !std::isfinite(m1) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw InvalidArgument("model parameters must be finite");
  }
  if (!(m0 > 0.0)) throw InvalidArgument("m0 must be positive (non-degenerate Kirchhoff coefficient)");
  if (m1 < 0.0) throw InvalidArgument("m1 must be nonnegative");
  if (alpha == 0.0 || beta == 0.0) throw InvalidArgument("alpha and beta must be nonzero");
  if ((alpha > 0.0) != (beta > 0.0)) {
    throw InvalidArgument("alpha and beta must have the same sign (alpha*beta > 0)");
  }
}

ModalState ModalState::zero(std::size_t n_modes, double t) {
  ModalState s;
  s.t = t;
  s.h.assign(n_modes, 0.0);
  s.v.assign(n_modes, 0.0);
  s.c.assign(n_modes, 0.0);
  return s;
}

bool ModalState::is_finite() const {
  auto finite = [](const std::vector<double>& xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
  };
  return std::isfinite(t) && finite(h) && finite(v) && finite(c);
}

double kirchhoff_coefficient(const ModelParams& params, double s) {
  if (s < 0.0) throw InvalidArgument("Kirchhoff argument must be nonnegative");
  return params.m0() + params.m1() * s;
}

double grad_norm_sq(const EigenBasis& basis, std::span<const double> h) {
  if (h.size() != basis.size()) throw InvalidArgument("coefficient count does not match basis size");
  double s = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) s += basis.lambda(k) * h[k] * h[k];
  return s;
}

void check_shape(const EigenBasis& basis, const ModalState& state) {
  const std::size_t n = basis.size();
  if (state.h.size() != n || state.v.size() != n || state.c.size() != n) {
    throw InvalidArgument("modal state size does not match basis size");
  }
}

ModalRate rhs(const ModelParams& params, const EigenBasis& basis, const ModalState& state) {
  check_shape(basis, state);
  if (!state.is_finite()) throw NumericFault("non-finite modal state passed to rhs");

  const double phi = kirchhoff_coefficient(params, grad_norm_sq(basis, state.h));
  const double alpha = params.alpha();
  const double beta = params.beta();
  const std::size_t n = basis.size();

  ModalRate r;
  r.dh.resize(n);
  r.dv.resize(n);
  r.dc.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double lam = basis.lambda(k);
    r.dh[k] = state.v[k];
    r.dv[k] = -phi * lam * state.h[k] + alpha * lam * state.c[k];
    r.dc[k] = -lam * state.c[k] - beta * lam * state.v[k];
  }
  return r;
}

Matrix3 linear_system_matrix(const ModelParams& params, double lambda) {
  if (!params.linear_mode()) throw InvalidArgument("linear_system_matrix requires m1 == 0");
  if (!(lambda > 0.0)) throw InvalidArgument("eigenvalue must be positive");
  return {{{0.0, 1.0, 0.0},
           {-params.m0() * lambda, 0.0, params.alpha() * lambda},
           {0.0, -params.beta() * lambda, -lambda}}};
}

}  // namespace kheat
