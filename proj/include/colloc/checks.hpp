/**
 * @file checks.hpp
 * @brief Self-checks run by `colloc check`: Jacobians, posterior gradients,
 *        quadrature exactness, basis partition of unity, the solver and the
 *        sampler on analytic targets.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "colloc/posterior.hpp"

namespace colloc {

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Largest relative error |g - fd| / max(1, |fd|) between the analytic
/// gradient and central differences over `states` random states near
/// `center`. Coordinates where both are below 1e-8 are skipped.
double gradient_check(const PosteriorSpec& spec, const PosteriorState& center, int states, std::uint64_t seed);

/// Synthetic problems used by the gradient checks: "fn" or "lv".
ProblemPtr synthetic_problem(const std::string& model, PriorKind prior, std::uint64_t seed);

/// Smoothing parameter typical of a selected fit for that problem.
double synthetic_lambda(const std::string& model);

/// The simulation's parameters and noise levels with coefficients projected
/// from the true trajectory.
PosteriorState reference_state(const Problem& problem, const std::string& model);

std::vector<CheckResult> run_property_checks(std::uint64_t seed = 1);

}  // namespace colloc
