#include "kheat/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "kheat/errors.hpp"

namespace kheat {

namespace {

constexpr double pi = std::numbers::pi;

bool same_eigenvalue(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

}  // namespace

Domain Domain::interval(double length) {
  if (!(length > 0.0) || !std::isfinite(length)) {
    throw InvalidArgument("interval length must be positive and finite");
  }
  return Domain(Kind::interval, length, 0.0);
}

Domain Domain::rectangle(double lx, double ly) {
  if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly)) {
    throw InvalidArgument("rectangle side lengths must be positive and finite");
  }
  return Domain(Kind::rectangle, lx, ly);
}

bool Domain::contains(const Point& p, double slack) const {
  for (int axis = 0; axis < dimension(); ++axis) {
    const double len = lengths_[static_cast<std::size_t>(axis)];
    const double x = p[static_cast<std::size_t>(axis)];
    if (!std::isfinite(x) || x < -slack * len || x > len * (1.0 + slack)) return false;
  }
  return true;
}

EigenBasis::EigenBasis(const Domain& domain, std::size_t n_modes) : domain_(domain) {
  if (n_modes == 0) throw InvalidArgument("n_modes must be at least 1");

  struct Candidate {
    double lambda;
    ModeIndex index;
  };
  std::vector<Candidate> candidates;

  if (domain.kind() == Domain::Kind::interval) {
    const double len = domain.length(0);
    for (std::size_t k = 1; k <= n_modes; ++k) {
      const double w = static_cast<double>(k) * pi / len;
      candidates.push_back({w * w, {static_cast<int>(k), 0}});
    }
  } else {
    // The n smallest pairs all have j <= n and k <= n.
    const double lx = domain.length(0);
    const double ly = domain.length(1);
    const int n = static_cast<int>(n_modes);
    candidates.reserve(n_modes * n_modes);
    for (int j = 1; j <= n; ++j) {
      for (int k = 1; k <= n; ++k) {
        const double wx = j * pi / lx;
        const double wy = k * pi / ly;
        candidates.push_back({wx * wx + wy * wy, {j, k}});
      }
    }
  }

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.lambda != b.lambda) return a.lambda < b.lambda;
    return a.index < b.index;
  });
  // Eigenvalues equal up to rounding form one degenerate group, ordered by index.
  for (std::size_t lo = 0; lo < candidates.size();) {
    std::size_t hi = lo + 1;
    while (hi < candidates.size() && same_eigenvalue(candidates[hi].lambda, candidates[lo].lambda)) ++hi;
    std::sort(candidates.begin() + static_cast<std::ptrdiff_t>(lo),
              candidates.begin() + static_cast<std::ptrdiff_t>(hi),
              [](const Candidate& a, const Candidate& b) { return a.index < b.index; });
    lo = hi;
  }

  candidates.resize(n_modes);
  lambdas_.reserve(n_modes);
  indices_.reserve(n_modes);
  for (const auto& c : candidates) {
    lambdas_.push_back(c.lambda);
    indices_.push_back(c.index);
  }
  // Keep the stored sequence monotone even if a degenerate group was reordered.
  for (std::size_t k = 1; k < lambdas_.size(); ++k) {
    if (same_eigenvalue(lambdas_[k], lambdas_[k - 1])) lambdas_[k] = std::max(lambdas_[k], lambdas_[k - 1]);
  }
}

double EigenBasis::eigenfunction(std::size_t k, const Point& p) const {
  const ModeIndex& idx = indices_[k];
  const double lx = domain_.length(0);
  if (domain_.kind() == Domain::Kind::interval) {
    return std::sqrt(2.0 / lx) * std::sin(idx[0] * pi * p[0] / lx);
  }
  const double ly = domain_.length(1);
  return 2.0 / std::sqrt(lx * ly) * std::sin(idx[0] * pi * p[0] / lx) *
         std::sin(idx[1] * pi * p[1] / ly);
}

int EigenBasis::max_wavenumber() const {
  int m = 0;
  for (const auto& idx : indices_) m = std::max({m, idx[0], idx[1]});
  return m;
}

EigenBasis build_basis(const Domain& domain, std::size_t n_modes) {
  return EigenBasis(domain, n_modes);
}

void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights) {
  if (order < 1) throw InvalidArgument("quadrature order must be at least 1");
  const auto n = static_cast<std::size_t>(order);
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = pk;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged node for the weight.
    double p0 = 1.0;
    double p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
      p0 = p1;
      p1 = pk;
    }
    dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
}

namespace {

void composite_axis(double length, int panels_per_pi, int min_panels, int order,
                    std::vector<double>& x, std::vector<double>& w) {
  std::vector<double> gx;
  std::vector<double> gw;
  gauss_legendre(order, gx, gw);
  const int panels =
      std::max({1, min_panels, static_cast<int>(std::ceil(panels_per_pi * length / pi - 1e-9))});
  const double width = length / panels;
  x.clear();
  w.clear();
  for (int p = 0; p < panels; ++p) {
    const double a = p * width;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      x.push_back(a + 0.5 * width * (gx[i] + 1.0));
      w.push_back(0.5 * width * gw[i]);
    }
  }
}

}  // namespace

QuadratureGrid quadrature_grid(const EigenBasis& basis, const QuadratureRule& rule) {
  if (rule.panels_per_pi < 1 || rule.order < 1) {
    throw InvalidArgument("quadrature needs at least one panel and order >= 1");
  }
  const int min_panels = basis.max_wavenumber();
  const Domain& dom = basis.domain();
  std::vector<double> x;
  std::vector<double> wx;
  composite_axis(dom.length(0), rule.panels_per_pi, min_panels, rule.order, x, wx);

  QuadratureGrid grid;
  if (dom.kind() == Domain::Kind::interval) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      grid.nodes.push_back({x[i], 0.0});
      grid.weights.push_back(wx[i]);
    }
    return grid;
  }
  std::vector<double> y;
  std::vector<double> wy;
  composite_axis(dom.length(1), rule.panels_per_pi, min_panels, rule.order, y, wy);
  grid.nodes.reserve(x.size() * y.size());
  grid.weights.reserve(x.size() * y.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      grid.nodes.push_back({x[i], y[j]});
      grid.weights.push_back(wx[i] * wy[j]);
    }
  }
  return grid;
}

std::vector<double> project_initial_data(const EigenBasis& basis, const ScalarField& field,
                                         const QuadratureRule& rule) {
  const QuadratureGrid grid = quadrature_grid(basis, rule);
  std::vector<double> values(grid.nodes.size());
  for (std::size_t q = 0; q < grid.nodes.size(); ++q) {
    values[q] = field(grid.nodes[q]);
    if (!std::isfinite(values[q])) throw InvalidArgument("initial field is not finite at a quadrature node");
  }
  std::vector<double> coeffs(basis.size(), 0.0);
  for (std::size_t k = 0; k < basis.size(); ++k) {
    double acc = 0.0;
    for (std::size_t q = 0; q < grid.nodes.size(); ++q) {
      acc += grid.weights[q] * values[q] * basis.eigenfunction(k, grid.nodes[q]);
    }
    coeffs[k] = acc;
  }
  return coeffs;
}

std::vector<double> project_initial_data(const EigenBasis& basis, const SampledField& field) {
  const Domain& dom = basis.domain();
  const bool is_interval = dom.kind() == Domain::Kind::interval;
  const std::size_t mx = field.intervals_x;
  const std::size_t my = is_interval ? 0 : field.intervals_y;
  if (mx == 0 || (!is_interval && my == 0)) throw InvalidArgument("sample grid needs at least one interval per axis");
  if (is_interval && field.intervals_y != 0) throw InvalidArgument("interval data must not carry a y grid");
  const std::size_t expected = is_interval ? mx + 1 : (mx + 1) * (my + 1);
  if (field.values.size() != expected) {
    throw InvalidArgument("sample count " + std::to_string(field.values.size()) + " does not match grid (" +
                          std::to_string(expected) + " expected)");
  }
  for (const auto& idx : basis.mode_indices()) {
    if (static_cast<std::size_t>(idx[0]) >= mx || (!is_interval && static_cast<std::size_t>(idx[1]) >= my)) {
      throw InvalidArgument("sample grid too coarse for the requested modes");
    }
  }

  const double hx = dom.length(0) / static_cast<double>(mx);
  const double hy = is_interval ? 1.0 : dom.length(1) / static_cast<double>(my);
  std::vector<double> coeffs(basis.size(), 0.0);
  for (std::size_t k = 0; k < basis.size(); ++k) {
    double acc = 0.0;
    // Endpoint samples carry weight 1/2 but e_k vanishes there, so interior nodes suffice.
    if (is_interval) {
      for (std::size_t i = 1; i < mx; ++i) {
        acc += field.values[i] * basis.eigenfunction(k, {static_cast<double>(i) * hx, 0.0});
      }
      coeffs[k] = acc * hx;
    } else {
      for (std::size_t j = 1; j < my; ++j) {
        for (std::size_t i = 1; i < mx; ++i) {
          const Point p{static_cast<double>(i) * hx, static_cast<double>(j) * hy};
          acc += field.values[j * (mx + 1) + i] * basis.eigenfunction(k, p);
        }
      }
      coeffs[k] = acc * hx * hy;
    }
  }
  return coeffs;
}

std::vector<double> evaluate_field(const EigenBasis& basis, std::span<const double> coeffs,
                                   std::span<const Point> points) {
  if (coeffs.size() != basis.size()) throw InvalidArgument("coefficient count does not match basis size");
  std::vector<double> out;
  out.reserve(points.size());
  for (const Point& p : points) {
    if (!basis.domain().contains(p)) throw InvalidArgument("evaluation point lies outside the domain");
    double acc = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k) acc += coeffs[k] * basis.eigenfunction(k, p);
    out.push_back(acc);
  }
  return out;
}

}  // namespace kheat
