#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace kheat {

/// A point of the physical domain. For intervals only x is used.
using Point = std::array<double, 2>;

/// Bounded product domain with closed-form Dirichlet eigenpairs.
class Domain {
public:
  enum class Kind { interval, rectangle };

  /// (0, L). Throws InvalidArgument unless L > 0.
  static Domain interval(double length);
  /// (0, Lx) x (0, Ly). Throws InvalidArgument unless both lengths are > 0.
  static Domain rectangle(double lx, double ly);

  Kind kind() const { return kind_; }
  int dimension() const { return kind_ == Kind::interval ? 1 : 2; }
  double length(int axis = 0) const { return lengths_[static_cast<std::size_t>(axis)]; }

  bool contains(const Point& p, double slack = 1e-12) const;

private:
  Domain(Kind kind, double lx, double ly) : kind_(kind), lengths_{lx, ly} {}

  Kind kind_;
  std::array<double, 2> lengths_;
};

/// Integer label of an eigenfunction: (k, 0) on an interval, (j, k) on a rectangle.
using ModeIndex = std::array<int, 2>;

/// Composite Gauss-Legendre settings, expressed per length pi along each axis.
struct QuadratureRule {
  int panels_per_pi = 8;
  int order = 10;
};

/// Dirichlet-Laplacian eigenbasis, L2-orthonormal, eigenvalues ascending.
///
/// Degenerate eigenvalues (square rectangles) are ordered lexicographically
/// by mode index, so a basis of n modes is always a prefix of a larger one.
class EigenBasis {
public:
  EigenBasis(const Domain& domain, std::size_t n_modes);

  const Domain& domain() const { return domain_; }
  std::size_t size() const { return lambdas_.size(); }
  std::span<const double> lambdas() const { return lambdas_; }
  double lambda(std::size_t k) const { return lambdas_[k]; }
  double max_lambda() const { return lambdas_.back(); }
  const std::vector<ModeIndex>& mode_indices() const { return indices_; }

  /// e_k(p). No domain check; callers validate points.
  double eigenfunction(std::size_t k, const Point& p) const;

  /// Largest one-dimensional wavenumber used by any mode.
  int max_wavenumber() const;

private:
  Domain domain_;
  std::vector<double> lambdas_;
  std::vector<ModeIndex> indices_;
};

/// Throws InvalidArgument for n_modes == 0.
EigenBasis build_basis(const Domain& domain, std::size_t n_modes);

/// Nodes and weights of a composite Gauss-Legendre rule over the whole domain.
struct QuadratureGrid {
  std::vector<Point> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre nodes/weights on [-1, 1], Newton iteration on P_n.
void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights);

/// Tensor composite rule. Each axis gets at least basis.max_wavenumber() panels
/// so the highest modes stay resolved.
QuadratureGrid quadrature_grid(const EigenBasis& basis, const QuadratureRule& rule = {});

using ScalarField = std::function<double(const Point&)>;

/// <field, e_k> for every mode, by composite quadrature.
std::vector<double> project_initial_data(const EigenBasis& basis, const ScalarField& field,
                                         const QuadratureRule& rule = {});

/// Field values on a uniform grid including the boundary.
///
/// Interval: intervals_x + 1 samples. Rectangle: (intervals_x + 1) * (intervals_y + 1)
/// samples, x fastest.
struct SampledField {
  std::size_t intervals_x = 0;
  std::size_t intervals_y = 0;
  std::vector<double> values;
};

/// Projection of sampled data by the trapezoid rule (a discrete sine transform).
/// Exact for finite sine combinations below the grid Nyquist index. Throws
/// InvalidArgument when the grid shape disagrees with the domain or when it has
/// no more intervals than the largest wavenumber in the basis.
std::vector<double> project_initial_data(const EigenBasis& basis, const SampledField& field);

/// Sum_k coeffs_k e_k(p) at each point. Throws InvalidArgument for a length
/// mismatch or a point outside the closed domain.
std::vector<double> evaluate_field(const EigenBasis& basis, std::span<const double> coeffs,
                                   std::span<const Point> points);

}  // namespace kheat
