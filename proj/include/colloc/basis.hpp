/**
 * @file basis.hpp
 * @brief Clamped uniform B-spline bases: construction, evaluation, and
 *        penalized least-squares smoothing.
 */
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace colloc {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row i holds the basis coefficients of state component i.
using SplineCoefficients = Eigen::MatrixXd;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double length() const { return hi - lo; }
  bool contains(double t) const { return t >= lo && t <= hi; }
};

/// Clamped B-spline basis of a given order with equally spaced interior knots.
class BasisSpec {
 public:
  int order() const { return order_; }
  int degree() const { return order_ - 1; }
  int num_basis() const { return num_basis_; }
  int num_interior_knots() const { return num_basis_ - order_; }
  Interval domain() const { return domain_; }

  /// Full knot vector of length num_basis + order.
  const std::vector<double>& knots() const { return knots_; }

  /// Distinct knot values from domain().lo to domain().hi.
  std::vector<double> breakpoints() const;

  /// Index of the knot span [b_s, b_{s+1}) containing t, with t = hi mapped
  /// to the last span.
  int span_index(double t) const;

 private:
  friend BasisSpec make_basis(int order, int num_basis, Interval domain);

  int order_ = 4;
  int num_basis_ = 4;
  Interval domain_;
  std::vector<double> knots_;
};

/// Throws DimensionError when order < 2, num_basis < order, or the domain is
/// empty.
BasisSpec make_basis(int order, int num_basis, Interval domain);

/// Basis values and first derivatives at a set of times. Only `order`
/// consecutive columns of each row are nonzero, starting at first[row].
struct BasisMatrix {
  std::vector<double> times;
  RowMatrix values;
  RowMatrix derivs;
  std::vector<int> first;

  /// Number of nonzero entries per row (the spline order).
  int support = 0;

  int rows() const { return static_cast<int>(times.size()); }

  /// Spline value sum_l phi_l(times[row]) * coeffs[l].
  double value(int row, const double* coeffs) const {
    const double* v = values.data() + static_cast<Eigen::Index>(row) * values.cols() + first[row];
    const double* c = coeffs + first[row];
    double s = 0.0;
    for (int k = 0; k < support; ++k) s += v[k] * c[k];
    return s;
  }

  double derivative(int row, const double* coeffs) const {
    const double* v = derivs.data() + static_cast<Eigen::Index>(row) * derivs.cols() + first[row];
    const double* c = coeffs + first[row];
    double s = 0.0;
    for (int k = 0; k < support; ++k) s += v[k] * c[k];
    return s;
  }

  /// out[l] += scale * phi_l(times[row]) over the row's support.
  void accumulate_value(int row, double scale, double* out) const {
    const double* v = values.data() + static_cast<Eigen::Index>(row) * values.cols() + first[row];
    double* o = out + first[row];
    for (int k = 0; k < support; ++k) o[k] += scale * v[k];
  }

  void accumulate_derivative(int row, double scale, double* out) const {
    const double* v = derivs.data() + static_cast<Eigen::Index>(row) * derivs.cols() + first[row];
    double* o = out + first[row];
    for (int k = 0; k < support; ++k) o[k] += scale * v[k];
  }
};

/// Cox-de Boor evaluation at each time. Throws DomainError for times outside
/// the closed domain.
BasisMatrix eval_basis(const BasisSpec& spec, std::span<const double> times);

/// Values of the `order` nonzero basis functions at t and their derivatives up
/// to `num_derivs`; ders(k, j) is the k-th derivative of basis first + j.
struct LocalBasis {
  int first = 0;
  Eigen::MatrixXd ders;
};
LocalBasis eval_local(const BasisSpec& spec, double t, int num_derivs);

/// Gram matrix of second derivatives, integral of phi_k'' phi_l'' over the domain.
Eigen::MatrixXd roughness_matrix(const BasisSpec& spec);

/// Per-component penalized least squares: minimizes the squared residuals at
/// observed entries (NaN marks a missing entry) plus
/// roughness_penalty * integral of the squared second derivative.
/// observations is num_times x num_components. Throws RankDeficiencyError
/// naming the component when its normal matrix is numerically singular.
SplineCoefficients smooth_data(const BasisSpec& spec, std::span<const double> times,
                               const Eigen::MatrixXd& observations, double roughness_penalty);

/// Number of individual basis-point evaluations performed by this process.
std::uint64_t basis_evaluation_count();

}  // namespace colloc
