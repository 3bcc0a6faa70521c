#include "colloc/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "colloc/errors.hpp"

namespace colloc {
namespace {

GaussRule reference_rule(int n) {
  GaussRule rule;
  rule.interval = Interval{-1.0, 1.0};
  rule.nodes.assign(static_cast<std::size_t>(n), 0.0);
  rule.weights.assign(static_cast<std::size_t>(n), 0.0);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    bool converged = false;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      // p1 = P_n(x), p0 = P_{n-1}(x)
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      if (n == 1) dp = 1.0;
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) <= 1e-14) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw ConvergenceError("gauss_legendre: Newton iteration did not converge for n = " +
                             std::to_string(n));
    }
    // Recompute the derivative at the converged root for the weight.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = (n == 1) ? 1.0 : n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // x decreases from near +1; store ascending and mirror.
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
    rule.weights[static_cast<std::size_t>(i)] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return rule;
}

GaussRule map_rule(const GaussRule& ref, Interval target) {
  GaussRule out;
  out.interval = target;
  const double half = 0.5 * target.length();
  const double mid = 0.5 * (target.lo + target.hi);
  out.nodes.reserve(ref.nodes.size());
  out.weights.reserve(ref.weights.size());
  for (std::size_t k = 0; k < ref.nodes.size(); ++k) {
    out.nodes.push_back(mid + half * ref.nodes[k]);
    out.weights.push_back(half * ref.weights[k]);
  }
  return out;
}

void append(GaussRule& into, const GaussRule& piece) {
  into.nodes.insert(into.nodes.end(), piece.nodes.begin(), piece.nodes.end());
  into.weights.insert(into.weights.end(), piece.weights.begin(), piece.weights.end());
}

}  // namespace

GaussRule gauss_legendre(int n, Interval interval) {
  if (n < 1) throw DimensionError("gauss_legendre: need at least one node");
  if (!(interval.hi > interval.lo)) throw DimensionError("gauss_legendre: interval must have a < b");
  return map_rule(reference_rule(n), interval);
}

GaussRule integration_rule(const BasisSpec& spec, Interval interval, int nodes_per_piece,
                           InnerScheme scheme) {
  GaussRule out;
  out.interval = interval;
  if (!(interval.hi > interval.lo)) return out;
  const GaussRule ref = gauss_legendre(nodes_per_piece, Interval{-1.0, 1.0});
  if (scheme == InnerScheme::single) {
    append(out, map_rule(ref, interval));
    return out;
  }
  const std::vector<double> bp = spec.breakpoints();
  double lo = interval.lo;
  for (std::size_t s = 1; s < bp.size() && lo < interval.hi; ++s) {
    if (bp[s] <= lo) continue;
    const double hi = std::min(bp[s], interval.hi);
    append(out, map_rule(ref, Interval{lo, hi}));
    lo = hi;
  }
  return out;
}

GaussRule QuadraturePlan::inner_rule(int m) const {
  GaussRule out;
  const auto um = static_cast<std::size_t>(m);
  out.interval = Interval{basis_at_zero.times.front(), outer.nodes[um]};
  for (int s = 0; s < inner_full_spans[um]; ++s) append(out, span_rules[static_cast<std::size_t>(s)]);
  append(out, inner[um]);
  return out;
}

QuadraturePlan build_plan(const BasisSpec& spec, int outer_nodes, int inner_nodes, InnerScheme scheme) {
  if (outer_nodes < 1 || inner_nodes < 1) {
    throw DimensionError("build_plan: outer and inner node counts must be positive");
  }
  const Interval dom = spec.domain();
  QuadraturePlan plan;
  plan.scheme = scheme;
  plan.inner_size = inner_nodes;
  plan.outer = gauss_legendre(outer_nodes, dom);
  const GaussRule ref = gauss_legendre(inner_nodes, Interval{-1.0, 1.0});
  const std::vector<double> bp = spec.breakpoints();

  if (scheme == InnerScheme::composite) {
    for (std::size_t s = 0; s + 1 < bp.size(); ++s) {
      plan.span_rules.push_back(map_rule(ref, Interval{bp[s], bp[s + 1]}));
    }
  }
  std::vector<double> inner_times;
  inner_times.reserve(static_cast<std::size_t>(outer_nodes * inner_nodes));
  for (double xi : plan.outer.nodes) {
    Interval piece{dom.lo, xi};
    int full = 0;
    if (scheme == InnerScheme::composite) {
      full = spec.span_index(xi);
      piece.lo = bp[static_cast<std::size_t>(full)];
    }
    GaussRule r = map_rule(ref, piece);
    inner_times.insert(inner_times.end(), r.nodes.begin(), r.nodes.end());
    plan.inner.push_back(std::move(r));
    plan.inner_full_spans.push_back(full);
  }
  std::vector<double> span_times;
  for (const auto& r : plan.span_rules) span_times.insert(span_times.end(), r.nodes.begin(), r.nodes.end());

  plan.basis_at_outer = eval_basis(spec, plan.outer.nodes);
  plan.basis_at_inner = eval_basis(spec, inner_times);
  plan.basis_at_spans = eval_basis(spec, span_times);
  const double lo = dom.lo, hi = dom.hi;
  plan.basis_at_zero = eval_basis(spec, std::span<const double>(&lo, 1));
  plan.basis_at_end = eval_basis(spec, std::span<const double>(&hi, 1));
  return plan;
}

QuadratureSizes default_quadrature_sizes(const BasisSpec& spec, int model_poly_degree) {
  if (model_poly_degree < 1) throw DimensionError("default_quadrature_sizes: poly degree must be >= 1");
  QuadratureSizes q;
  const int deg = spec.degree();
  const int num = (deg + 1) * spec.num_interior_knots();
  q.outer = std::max(1, (num + 1) / 2);
  const int target = deg * model_poly_degree;
  q.inner = 1;
  while (2 * q.inner - 1 < target) ++q.inner;
  return q;
}

}  // namespace colloc
