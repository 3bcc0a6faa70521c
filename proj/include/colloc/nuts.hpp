/**
 * @file nuts.hpp
 * @brief No-U-Turn sampler with multinomial trajectory sampling, dual
 *        averaging of the step size, and a windowed diagonal metric.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace colloc {

/// Log density at q; writes the gradient into grad. Non-finite values mark
/// points outside the support.
using LogDensity = std::function<double(std::span<const double> q, std::span<double> grad)>;

struct NutsConfig {
  int num_iterations = 400;
  int num_warmup = 200;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  double initial_step_size = 1.0;

  /// Throws ConfigError unless 0 <= num_warmup < num_iterations,
  /// target_accept is in (0, 1), and 1 <= max_tree_depth <= 12.
  void validate() const;
};

struct Chain {
  /// Post-warmup draws in sampling coordinates, one row per iteration.
  Eigen::MatrixXd draws;
  std::vector<double> accept_stats;
  std::vector<int> tree_depths;
  std::vector<int> leapfrog_steps;
  int divergence_count = 0;
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;

  int num_kept() const { return static_cast<int>(draws.rows()); }
};

/// Runs one chain from init. Throws SamplerInitError if the density is not
/// finite at init or at any of 100 jittered restarts (jitter sd 0.1).
Chain sample(const LogDensity& target, const Eigen::VectorXd& init, const NutsConfig& config);

enum class CoordTransform { identity, exp };

struct ChainSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double level = 0.95;
};

/// Means and central `level` intervals after mapping each coordinate back
/// through its transform. transforms may be shorter than the dimension;
/// missing entries are identity.
ChainSummary summarize(const Chain& chain, const std::vector<CoordTransform>& transforms, double level = 0.95);

/// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double prob);

/// Mean absolute energy error over `num_steps` single leapfrog steps of size
/// step_size from random momenta at q (unit metric). Exposed to test the
/// integrator order.
double mean_leapfrog_energy_error(const LogDensity& target, const Eigen::VectorXd& q, double step_size,
                                  int num_steps, int trials, std::uint64_t seed);

}  // namespace colloc
