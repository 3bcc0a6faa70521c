/**
 * @file odesolve.hpp
 * @brief Dormand-Prince 5(4) integrator with dense output. Used to simulate
 *        data and score reconstructions, never inside inference.
 */
#pragma once

#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "colloc/basis.hpp"
#include "colloc/models.hpp"

namespace colloc {

struct SolveConfig {
  double rel_tol = 1e-8;
  double abs_tol = 1e-8;
  long max_steps = 1000000;
};

/// Trajectory at each grid time (rows) for each component (columns). The
/// grid must be nondecreasing; grid[0] is the initial time. Throws
/// SolverStepLimitError (with the last reached time) when the step budget is
/// exhausted, the step size underflows, or the state becomes non-finite.
Eigen::MatrixXd solve(const OdeModel& model, const Eigen::VectorXd& theta, const Eigen::VectorXd& x0,
                      const std::vector<double>& grid, const SolveConfig& config = {});

struct TrajectoryRmse {
  /// Root mean square difference per component over the grid.
  Eigen::VectorXd per_component;
  /// Square root of the summed per-component mean squares.
  double total = 0.0;
  /// The reconstructed trajectory could not be integrated; values are +inf.
  bool diverged = false;
};

/// Solves the estimated and the true system on a uniform grid of n_grid
/// points over `interval` and compares them. n_grid must be >= 100.
TrajectoryRmse trajectory_rmse(const OdeModel& model, const Eigen::VectorXd& theta_hat,
                               const Eigen::VectorXd& x0_hat, const Eigen::VectorXd& theta_true,
                               const Eigen::VectorXd& x0_true, Interval interval, int n_grid = 2001,
                               const SolveConfig& config = {});

std::vector<double> uniform_grid(Interval interval, int n);

}  // namespace colloc
