#include "colloc/basis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <vector>

#include "colloc/errors.hpp"
#include "colloc/quadrature.hpp"

namespace colloc {
namespace {

std::atomic<std::uint64_t> g_basis_evaluations{0};

// Knot span mu with knots[mu] <= t < knots[mu + 1]; t == hi goes to the last
// nonempty span.
int find_knot_span(const BasisSpec& spec, double t) {
  const auto& u = spec.knots();
  const int p = spec.degree();
  const int last = spec.num_basis() - 1;
  if (t >= u[last + 1]) return last;
  const Interval d = spec.domain();
  const int n_spans = spec.num_interior_knots() + 1;
  int s = static_cast<int>(std::floor((t - d.lo) / d.length() * n_spans));
  s = std::clamp(s, 0, n_spans - 1);
  int mu = p + s;
  while (mu > p && t < u[mu]) --mu;
  while (mu < last && t >= u[mu + 1]) ++mu;
  return mu;
}

// Triangular Cox-de Boor table with derivatives (Piegl & Tiller, A2.3).
void basis_derivatives(const std::vector<double>& u, int span, int p, double t, int n,
                       Eigen::MatrixXd& ders) {
  Eigen::MatrixXd ndu(p + 1, p + 1);
  Eigen::VectorXd left(p + 1), right(p + 1);
  ndu(0, 0) = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - u[span + 1 - j];
    right[j] = u[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu(j, r) = right[r + 1] + left[j - r];
      const double temp = ndu(r, j - 1) / ndu(j, r);
      ndu(r, j) = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu(j, j) = saved;
  }
  ders.setZero(n + 1, p + 1);
  for (int j = 0; j <= p; ++j) ders(0, j) = ndu(j, p);

  const int nd = std::min(n, p);
  Eigen::MatrixXd a(2, p + 1);
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a.setZero();
    a(0, 0) = 1.0;
    for (int k = 1; k <= nd; ++k) {
      double d = 0.0;
      const int rk = r - k;
      const int pk = p - k;
      if (r >= k) {
        a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
        d = a(s2, 0) * ndu(rk, pk);
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
        d += a(s2, j) * ndu(rk + j, pk);
      }
      if (r <= pk) {
        a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
        d += a(s2, k) * ndu(r, pk);
      }
      ders(k, r) = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= nd; ++k) {
    ders.row(k) *= factor;
    factor *= (p - k);
  }
}

}  // namespace

BasisSpec make_basis(int order, int num_basis, Interval domain) {
  if (order < 2) throw DimensionError("basis order must be at least 2, got " + std::to_string(order));
  if (num_basis < order) {
    throw DimensionError("num_basis (" + std::to_string(num_basis) + ") must be >= order (" +
                         std::to_string(order) + ")");
  }
  if (!(domain.hi > domain.lo) || !std::isfinite(domain.lo) || !std::isfinite(domain.hi)) {
    throw DimensionError("basis domain must have positive finite length");
  }
  BasisSpec spec;
  spec.order_ = order;
  spec.num_basis_ = num_basis;
  spec.domain_ = domain;
  const int n_int = num_basis - order;
  spec.knots_.reserve(static_cast<std::size_t>(num_basis + order));
  for (int k = 0; k < order; ++k) spec.knots_.push_back(domain.lo);
  for (int k = 1; k <= n_int; ++k) {
    spec.knots_.push_back(domain.lo + domain.length() * static_cast<double>(k) / (n_int + 1));
  }
  for (int k = 0; k < order; ++k) spec.knots_.push_back(domain.hi);
  return spec;
}

std::vector<double> BasisSpec::breakpoints() const {
  std::vector<double> b(knots_.begin() + degree(), knots_.end() - degree());
  return b;
}

int BasisSpec::span_index(double t) const { return find_knot_span(*this, t) - degree(); }

LocalBasis eval_local(const BasisSpec& spec, double t, int num_derivs) {
  if (!spec.domain().contains(t)) {
    throw DomainError("time " + std::to_string(t) + " outside basis domain [" +
                      std::to_string(spec.domain().lo) + ", " + std::to_string(spec.domain().hi) + "]");
  }
  g_basis_evaluations.fetch_add(1, std::memory_order_relaxed);
  const int mu = find_knot_span(spec, t);
  LocalBasis out;
  out.first = mu - spec.degree();
  basis_derivatives(spec.knots(), mu, spec.degree(), t, num_derivs, out.ders);
  return out;
}

BasisMatrix eval_basis(const BasisSpec& spec, std::span<const double> times) {
  const int n = static_cast<int>(times.size());
  const int big_l = spec.num_basis();
  BasisMatrix m;
  m.times.assign(times.begin(), times.end());
  m.values = RowMatrix::Zero(n, big_l);
  m.derivs = RowMatrix::Zero(n, big_l);
  m.first.resize(static_cast<std::size_t>(n));
  m.support = spec.order();
  for (int r = 0; r < n; ++r) {
    const LocalBasis loc = eval_local(spec, times[static_cast<std::size_t>(r)], 1);
    m.first[static_cast<std::size_t>(r)] = loc.first;
    for (int j = 0; j < spec.order(); ++j) {
      m.values(r, loc.first + j) = loc.ders(0, j);
      m.derivs(r, loc.first + j) = loc.ders(1, j);
    }
  }
  return m;
}

Eigen::MatrixXd roughness_matrix(const BasisSpec& spec) {
  const int big_l = spec.num_basis();
  Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(big_l, big_l);
  const std::vector<double> bp = spec.breakpoints();
  for (std::size_t s = 0; s + 1 < bp.size(); ++s) {
    const GaussRule rule = gauss_legendre(spec.order(), Interval{bp[s], bp[s + 1]});
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const LocalBasis loc = eval_local(spec, rule.nodes[q], 2);
      for (int a = 0; a < spec.order(); ++a) {
        for (int b = 0; b < spec.order(); ++b) {
          pen(loc.first + a, loc.first + b) += rule.weights[q] * loc.ders(2, a) * loc.ders(2, b);
        }
      }
    }
  }
  return pen;
}

SplineCoefficients smooth_data(const BasisSpec& spec, std::span<const double> times,
                               const Eigen::MatrixXd& observations, double roughness_penalty) {
  if (observations.rows() != static_cast<Eigen::Index>(times.size())) {
    throw DimensionError("smooth_data: observation rows must match the number of times");
  }
  if (!(roughness_penalty >= 0.0)) throw DimensionError("smooth_data: penalty must be nonnegative");
  const int n_comp = static_cast<int>(observations.cols());
  const int big_l = spec.num_basis();
  const BasisMatrix basis = eval_basis(spec, times);
  // Square-root factor of the penalty so each component is a stacked
  // least-squares problem; QR keeps large penalties well conditioned.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(roughness_matrix(spec));
  const Eigen::MatrixXd root =
      eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  const double scale = std::sqrt(roughness_penalty);

  SplineCoefficients coeffs(n_comp, big_l);
  for (int i = 0; i < n_comp; ++i) {
    std::vector<int> rows;
    for (int r = 0; r < basis.rows(); ++r) {
      if (!std::isnan(observations(r, i))) rows.push_back(r);
    }
    const int n_obs = static_cast<int>(rows.size());
    if (n_obs < spec.order()) {
      throw DimensionError("smooth_data: component " + std::to_string(i) + " has " +
                           std::to_string(n_obs) + " observations, need at least " +
                           std::to_string(spec.order()));
    }
    const int n_pen = roughness_penalty > 0.0 ? big_l : 0;
    Eigen::MatrixXd a(n_obs + n_pen, big_l);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n_obs + n_pen);
    for (int k = 0; k < n_obs; ++k) {
      a.row(k) = basis.values.row(rows[static_cast<std::size_t>(k)]);
      b[k] = observations(rows[static_cast<std::size_t>(k)], i);
    }
    if (n_pen > 0) a.bottomRows(n_pen) = scale * root;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < big_l) {
      throw RankDeficiencyError(i, "smooth_data: penalized normal matrix is singular for component " +
                                       std::to_string(i));
    }
    coeffs.row(i) = qr.solve(b).transpose();
  }
  return coeffs;
}

std::uint64_t basis_evaluation_count() { return g_basis_evaluations.load(std::memory_order_relaxed); }

}  // namespace colloc
