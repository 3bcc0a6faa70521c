/**
 * @file quadrature.hpp
 * @brief Gauss-Legendre rules and the nested outer/inner plan used by the
 *        integrated-ODE prior.
 */
#pragma once

#include <vector>

#include "colloc/basis.hpp"

namespace colloc {

struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  Interval interval;

  int size() const { return static_cast<int>(nodes.size()); }
};

/// n-point Gauss-Legendre rule on [a, b] via Newton iteration on the Legendre
/// polynomial. Throws DimensionError for n < 1 or a >= b and ConvergenceError
/// if a root fails to converge within 100 iterations.
GaussRule gauss_legendre(int n, Interval interval);

/// How the inner integral over [t1, xi_m] is discretized.
enum class InnerScheme {
  /// K nodes on every knot span covered by [t1, xi_m]; exact when the
  /// integrand is a polynomial of degree <= 2K-1 on each span.
  composite,
  /// One K-node rule on the whole of [t1, xi_m].
  single,
};

/// K-node Gauss rule on [a, b], split at the basis breakpoints when the
/// scheme is composite. A zero-length interval yields an empty rule.
GaussRule integration_rule(const BasisSpec& spec, Interval interval, int nodes_per_piece,
                           InnerScheme scheme);

/// Outer rule on the basis domain plus, for each outer node xi_m, the inner
/// rule on [t1, xi_m], with every basis evaluation done up front.
///
/// In the composite scheme the inner rule for xi_m is the concatenation of
/// span_rules[0 .. inner_full_spans[m]) and the partial piece inner[m]
/// covering [b_q, xi_m]. In the single scheme inner_full_spans is zero and
/// inner[m] covers all of [t1, xi_m].
struct QuadraturePlan {
  InnerScheme scheme = InnerScheme::composite;
  int inner_size = 0;

  GaussRule outer;
  std::vector<GaussRule> inner;
  std::vector<int> inner_full_spans;
  std::vector<GaussRule> span_rules;

  BasisMatrix basis_at_outer;
  /// Rows m * inner_size .. (m + 1) * inner_size - 1 hold the nodes of inner[m].
  BasisMatrix basis_at_inner;
  /// Rows s * inner_size .. (s + 1) * inner_size - 1 hold the nodes of span_rules[s].
  BasisMatrix basis_at_spans;
  BasisMatrix basis_at_zero;
  BasisMatrix basis_at_end;

  int outer_size() const { return outer.size(); }

  /// The full inner rule on [t1, xi_m] as a flat list of nodes and weights.
  GaussRule inner_rule(int m) const;
};

QuadraturePlan build_plan(const BasisSpec& spec, int outer_nodes, int inner_nodes,
                          InnerScheme scheme = InnerScheme::composite);

struct QuadratureSizes {
  int outer = 1;
  int inner = 1;
};

/// Outer count ceil((degree + 1) * interior_knots / 2); inner count the
/// smallest K with 2K - 1 >= degree * model_poly_degree, which makes the
/// per-span inner rule exact for a polynomial vector field composed with the
/// spline.
QuadratureSizes default_quadrature_sizes(const BasisSpec& spec, int model_poly_degree);

}  // namespace colloc
