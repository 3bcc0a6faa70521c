/**
 * @file lambda_select.hpp
 * @brief Automatic smoothing-parameter selection over a geometric ladder of
 *        lambda values with an interval-overlap / discrepancy stopping rule.
 */
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "colloc/nuts.hpp"
#include "colloc/posterior.hpp"

namespace colloc {

struct LambdaConfig {
  double lambda0 = 1e2;
  double lambda_star = 1e3;
  double lambda_max = 1e6;
  double alpha = 0.1;
  double multiplier = 10.0;

  void validate() const;
  /// lambda0 * multiplier^p.
  double ladder(int p) const;
  /// Upper bound on the number of sampled ladder steps.
  int max_steps() const;
};

/// Posterior summaries of one chain, on the constrained scale.
struct FitResult {
  double lambda = 0.0;
  Chain chain;
  Eigen::VectorXd theta_mean, theta_lower, theta_upper;
  Eigen::VectorXd sigma_mean, sigma_lower, sigma_upper;
  SplineCoefficients coeff_mean;
  /// Initial condition implied by the spline, Phi(t1)^T c.
  Eigen::VectorXd x0_mean, x0_lower, x0_upper;
};

FitResult summarize_fit(const PosteriorSpec& spec, Chain chain, double level = 0.95);

/// Starting point of the ladder: estimates associated with lambda0.
struct InitialEstimate {
  PosteriorState state;
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd theta_lower, theta_upper;
  /// The prior did not depend on theta, so no chain was run.
  bool flat_target = false;
};

struct LambdaStep {
  double lambda = 0.0;
  Eigen::VectorXd theta_mean, theta_lower, theta_upper;
  Eigen::VectorXd sigma_mean;
  SplineCoefficients coeff_mean;
  double err = 0.0;
  /// False for the lambda0 entry built from the initial estimate.
  bool sampled = false;
  std::vector<double> overlap;
  int divergences = 0;
  double step_size = 0.0;
  double mean_accept = 0.0;
};

enum class StopReason { interval_overlap, err_increase, cap_reached };

std::string to_string(StopReason reason);

struct LambdaTrace {
  std::vector<LambdaStep> steps;
  double selected = 0.0;
  int selected_index = 0;
  StopReason stop_reason = StopReason::cap_reached;
};

struct LambdaSelection {
  LambdaTrace trace;
  FitResult fit;
};

/// Sum over components of squared gaps between each observation and the
/// integrated ODE along the spline, plus the squared gap between the spline
/// endpoint and that integral at tJ. Integrals use the plan's inner scheme
/// and node count.
double discrepancy_err(const PosteriorSpec& spec, const Eigen::VectorXd& theta_hat,
                       const SplineCoefficients& coeff_hat);

/// |current ∩ previous| / |current|, clamped to [0, 1]. Throws DomainError
/// when current has zero width.
double overlap_ratio(Interval current, Interval previous);

using StepCallback = std::function<void(const LambdaStep&)>;

/// Walks lambda0 * multiplier^p for p = 1, 2, ... Each chain starts from the
/// previous step's theta and sigma means and the initial coefficients. From
/// lambda_star on: stop at the current lambda if Err did not increase and
/// every overlap ratio exceeds 1 - alpha; stop at the previous lambda if Err
/// increased; stop at lambda_max otherwise.
LambdaSelection select_lambda(const ProblemPtr& problem, const InitialEstimate& init, const LambdaConfig& config,
                              const NutsConfig& nuts, const StepCallback& on_step = {});

/// Seed for the k-th chain derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k);

}  // namespace colloc

namespace colloc {

/// The full posterior at spec as a sampler target over the flat layout.
LogDensity make_log_density(const PosteriorSpec& spec);

}  // namespace colloc
