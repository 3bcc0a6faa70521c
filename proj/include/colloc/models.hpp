/**
 * @file models.hpp
 * @brief ODE vector fields with analytic Jacobians, and a name registry.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace colloc {

/// Vector field x' = f(x, theta, t). Matrices are written row-major into the
/// output spans: jac_x is I x I, jac_theta is I x P.
class OdeModel {
 public:
  virtual ~OdeModel() = default;

  virtual std::string name() const = 0;
  virtual int dim_state() const = 0;
  virtual int dim_params() const = 0;

  virtual void rhs(std::span<const double> x, std::span<const double> theta, double t,
                   std::span<double> dxdt) const = 0;
  virtual void jac_x(std::span<const double> x, std::span<const double> theta, double t,
                     std::span<double> out) const = 0;
  virtual void jac_theta(std::span<const double> x, std::span<const double> theta, double t,
                         std::span<double> out) const = 0;

  /// True for parameters sampled on the log scale.
  virtual std::vector<bool> param_positive() const = 0;

  /// Degree of f as a polynomial in x; a conservative bound otherwise.
  virtual int poly_degree() const = 0;

  virtual std::vector<std::string> state_names() const;
  virtual std::vector<std::string> param_names() const;
};

using ModelPtr = std::shared_ptr<const OdeModel>;

/// FitzHugh-Nagumo: theta = (a, b, c), x = (V, R).
ModelPtr fn_model();

/// Lotka-Volterra predator-prey: theta = (theta1..theta4), x = (prey, predator).
ModelPtr lv_model();

/// f = 0 with `dim_state` components and `dim_params` positive parameters
/// that do not enter the field.
ModelPtr zero_model(int dim_state, int dim_params);

/// f_i = theta_i * x_i with unconstrained theta.
ModelPtr linear_model(int dim_state);

using RhsFunction = std::function<void(std::span<const double> x, std::span<const double> theta,
                                       double t, std::span<double> dxdt)>;

struct ModelDefinition {
  std::string name;
  int dim_state = 0;
  int dim_params = 0;
  RhsFunction rhs;
  std::vector<bool> param_positive;
  int poly_degree = 3;
  std::vector<std::string> state_names;
  std::vector<std::string> param_names;
};

/// Wraps a field without analytic Jacobians; they are approximated by central
/// differences with a relative step of 1e-6, which limits gradient accuracy
/// to roughly 1e-8 relative.
ModelPtr finite_difference_model(ModelDefinition def);

struct JacobianReport {
  int trials = 0;
  double max_rel_error_x = 0.0;
  double max_rel_error_theta = 0.0;

  double max_rel_error() const { return std::max(max_rel_error_x, max_rel_error_theta); }
};

/// Compares analytic Jacobians against central differences (step 1e-6) at
/// random points. Throws ValidationError if any relative error exceeds 1e-5.
JacobianReport check_jacobians(const OdeModel& model, int trials, std::uint64_t seed);

/// Name -> factory map used by the CLI. Ships "fn" and "lv".
class ModelRegistry {
 public:
  using Factory = std::function<ModelPtr()>;

  static ModelRegistry& instance();

  void add(const std::string& name, Factory factory);
  bool contains(const std::string& name) const;
  ModelPtr create(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  ModelRegistry();
  mutable std::mutex mutex_;
  std::vector<std::pair<std::string, Factory>> entries_;
};

}  // namespace colloc
