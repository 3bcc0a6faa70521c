/**
 * @file harness.hpp
 * @brief End-to-end drivers: synthetic data, the initialization protocol,
 *        replicated simulation studies and fits to a single dataset.
 */
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "colloc/lambda_select.hpp"
#include "colloc/models.hpp"
#include "colloc/odesolve.hpp"
#include "colloc/posterior.hpp"
#include "colloc/quadrature.hpp"

namespace colloc {

/// Everything needed to go from an observation table to a fit.
struct FitSettings {
  int order = 4;
  int num_basis = 0;
  /// 0 resolves through default_quadrature_sizes.
  int quad_outer = 0;
  int quad_inner = 0;
  InnerScheme inner_scheme = InnerScheme::composite;
  PriorKind prior = PriorKind::integral;
  LambdaConfig lambda;
  NutsConfig nuts;
  /// Iterations for the theta-only initialization chain.
  NutsConfig init_nuts;
  double init_penalty = 0.1;
  double init_sigma = 0.1;
  /// Fit domain; defaults to [first time, last time] of the data.
  std::optional<Interval> domain;

  void validate() const;
};

/// Builds basis, plan and problem. Times are shifted so the domain starts
/// at 0 internally; the shift is kept as the problem's time offset.
ProblemPtr prepare_problem(ModelPtr model, const Observations& data, const FitSettings& settings);

/// Smoothed coefficients, sigma fixed at init_sigma, and theta from a chain
/// over theta alone with c and sigma held at those values.
InitialEstimate initialize(const ProblemPtr& problem, const FitSettings& settings);

struct Scenario {
  std::string name;
  std::string model;
  Eigen::VectorXd theta;
  Eigen::VectorXd x0;
  /// Noise standard deviation per component.
  Eigen::VectorXd noise_sd;
  /// Shared observation times; x0 is the state at times.front().
  std::vector<double> times;
  /// Optional per-component designs (subsets of `times`).
  std::vector<std::vector<double>> component_times;
  FitSettings fit;
  int replications = 1;
  std::uint64_t seed = 1;
  int rmse_grid = 2001;

  void validate() const;
};

/// Solves the true system at tolerance 1e-10 and adds independent Gaussian
/// noise. Components not observed at a time (per component_times) are NaN.
Observations generate_data(const Scenario& scenario, std::uint64_t data_seed);

struct ReplicationResult {
  int index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  Eigen::VectorXd theta_hat, theta_lower, theta_upper;
  Eigen::VectorXd sigma_hat;
  Eigen::VectorXd x0_hat;
  double lambda_hat = 0.0;
  StopReason stop_reason = StopReason::cap_reached;
  double err_initial = 0.0;
  double err_selected = 0.0;
  /// Reconstruction from the spline initial condition.
  TrajectoryRmse rmse;
  /// Reconstruction from the true initial condition.
  TrajectoryRmse rmse_true_x0;
  /// Root mean square of each reconstructed component over the grid.
  Eigen::VectorXd component_norm;
  int divergences = 0;
  double wall_seconds = 0.0;
  LambdaTrace trace;
};

ReplicationResult run_replication(const Scenario& scenario, int index);

struct Spread {
  double median = 0.0;
  double iqr = 0.0;
};

Spread median_iqr(std::vector<double> values);

struct StudyAggregates {
  int succeeded = 0;
  int failed = 0;
  Eigen::VectorXd theta_mean, theta_rmse;
  Eigen::VectorXd sigma_mean;
  std::vector<Spread> rmse_component;
  Spread rmse_total;
  std::vector<Spread> rmse_true_x0_component;
  Spread rmse_true_x0_total;
  Eigen::VectorXd component_norm_mean;
  int diverged = 0;
};

/// Aggregates over successful replications only.
StudyAggregates aggregate(const Scenario& scenario, const std::vector<ReplicationResult>& reps);

struct StudyResult {
  std::vector<ReplicationResult> replications;
  StudyAggregates aggregates;
};

using ReplicationCallback = std::function<void(const ReplicationResult&)>;

/// Runs every replication on `threads` workers (0 = hardware concurrency).
/// Results are ordered by index regardless of completion order. The callback
/// is called under a lock as replications finish.
StudyResult run_study(const Scenario& scenario, int threads = 0, const ReplicationCallback& on_done = {});

struct TrajectoryBands {
  /// Times in the data's own units.
  std::vector<double> times;
  /// grid x components.
  Eigen::MatrixXd mean, lower, upper;
};

struct DatasetFit {
  ProblemPtr problem;
  InitialEstimate init;
  LambdaSelection selection;
  TrajectoryBands bands;
};

/// Pointwise central `level` bands of the spline over a uniform grid.
TrajectoryBands spline_bands(const Problem& problem, const Chain& chain, int n_grid = 201, double level = 0.95);

DatasetFit fit_dataset(ModelPtr model, const Observations& data, const FitSettings& settings,
                       const StepCallback& on_step = {}, int band_grid = 201);

}  // namespace colloc
