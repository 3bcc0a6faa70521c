/**
 * @file posterior.hpp
 * @brief Log posterior of (theta, c, sigma) for spline collocation with an
 *        integrated-ODE or derivative-matching prior, and its gradient.
 *
 * Sampling coordinates: positive-constrained parameters and all noise
 * scales are on the log scale. With a flat prior on positive theta and
 * pi(sigma) ~ 1/sigma, the change of variables adds sum(theta_u) for the
 * positive parameters and nothing for log sigma.
 */
#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "colloc/basis.hpp"
#include "colloc/models.hpp"
#include "colloc/quadrature.hpp"

namespace colloc {

/// Observation table: values(j, i) is component i at times[j]; NaN = missing.
struct Observations {
  std::vector<double> times;
  Eigen::MatrixXd values;
  std::vector<std::string> names;

  int num_times() const { return static_cast<int>(times.size()); }
  int num_components() const { return static_cast<int>(values.cols()); }
  int count_observed(int component) const;
};

enum class PriorKind { integral, derivative };

std::string to_string(PriorKind kind);
PriorKind prior_kind_from_string(const std::string& s);

/// Everything about a fit except the smoothing parameter. Basis matrices at
/// the observation times are computed once here.
///
/// time_offset is added to internal times before they are passed to the
/// model, so a dataset starting at t = 1908 can be fit on [0, 20].
class Problem {
 public:
  Problem(ModelPtr model, BasisSpec basis, QuadraturePlan plan, Observations data, PriorKind prior,
          double time_offset = 0.0);

  const OdeModel& model() const { return *model_; }
  const ModelPtr& model_ptr() const { return model_; }
  const BasisSpec& basis() const { return basis_; }
  const QuadraturePlan& plan() const { return plan_; }
  const Observations& data() const { return data_; }
  PriorKind prior_kind() const { return prior_; }
  double time_offset() const { return time_offset_; }

  int num_states() const { return model_->dim_state(); }
  int num_params() const { return model_->dim_params(); }
  int num_basis() const { return basis_.num_basis(); }
  /// Length of the flat state vector: P + I * L + I.
  int dim() const { return num_params() + num_states() * num_basis() + num_states(); }

  /// Basis rows at the observed times of component i and the matching values.
  const BasisMatrix& obs_basis(int i) const { return obs_basis_[static_cast<std::size_t>(i)]; }
  const Eigen::VectorXd& obs_values(int i) const { return obs_values_[static_cast<std::size_t>(i)]; }

 private:
  ModelPtr model_;
  BasisSpec basis_;
  QuadraturePlan plan_;
  Observations data_;
  PriorKind prior_;
  double time_offset_;
  std::vector<BasisMatrix> obs_basis_;
  std::vector<Eigen::VectorXd> obs_values_;
};

using ProblemPtr = std::shared_ptr<const Problem>;

ProblemPtr make_problem(ModelPtr model, BasisSpec basis, QuadraturePlan plan, Observations data,
                        PriorKind prior, double time_offset = 0.0);

/// A Problem at a fixed smoothing parameter lambda > 0.
class PosteriorSpec {
 public:
  PosteriorSpec(ProblemPtr problem, double lambda);

  const Problem& problem() const { return *problem_; }
  const ProblemPtr& problem_ptr() const { return problem_; }
  double lambda() const { return lambda_; }
  PosteriorSpec with_lambda(double lambda) const { return PosteriorSpec(problem_, lambda); }

 private:
  ProblemPtr problem_;
  double lambda_;
};

struct PosteriorState {
  Eigen::VectorXd theta_u;
  SplineCoefficients coeffs;
  Eigen::VectorXd log_sigma;
};

/// Flat layout [theta_u | coeffs row by row | log_sigma].
Eigen::VectorXd pack(const PosteriorState& state);
PosteriorState unpack(const Problem& problem, std::span<const double> flat);

Eigen::VectorXd constrain_params(const OdeModel& model, const Eigen::VectorXd& theta_u);
Eigen::VectorXd unconstrain_params(const OdeModel& model, const Eigen::VectorXd& theta);

double log_likelihood(const PosteriorSpec& spec, const PosteriorState& state);
double log_prior_integral(const PosteriorSpec& spec, const PosteriorState& state);
double log_prior_derivative(const PosteriorSpec& spec, const PosteriorState& state);
/// Likelihood, the prior selected by the problem, and the log-transform term.
double log_posterior(const PosteriorSpec& spec, const PosteriorState& state);

struct PosteriorGradient {
  double value = 0.0;
  Eigen::VectorXd theta_u;
  SplineCoefficients coeffs;
  Eigen::VectorXd log_sigma;
};

PosteriorGradient grad_log_posterior(const PosteriorSpec& spec, const PosteriorState& state);

/// Log posterior at a flat state; fills grad (same layout) when non-empty.
double log_posterior_flat(const PosteriorSpec& spec, std::span<const double> flat, std::span<double> grad);

/// Prior term alone (no likelihood or Jacobian) for the given kind, with
/// optional gradient over the flat layout.
double log_prior_flat(const PosteriorSpec& spec, PriorKind kind, std::span<const double> flat,
                      std::span<double> grad);

}  // namespace colloc
