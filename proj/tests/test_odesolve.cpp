#include <doctest.h>

#include <cmath>

#include "colloc/errors.hpp"
#include "colloc/models.hpp"
#include "colloc/odesolve.hpp"

using namespace colloc;

namespace {

SolveConfig tol(double t) {
  SolveConfig c;
  c.rel_tol = c.abs_tol = t;
  return c;
}

// x' = x^2 blows up at t = 1 / x0.
class Riccati : public OdeModel {
 public:
  std::string name() const override { return "riccati"; }
  int dim_state() const override { return 1; }
  int dim_params() const override { return 0; }
  void rhs(std::span<const double> x, std::span<const double>, double, std::span<double> f) const override {
    f[0] = x[0] * x[0];
  }
  void jac_x(std::span<const double> x, std::span<const double>, double, std::span<double> j) const override {
    j[0] = 2 * x[0];
  }
  void jac_theta(std::span<const double>, std::span<const double>, double, std::span<double>) const override {}
  std::vector<bool> param_positive() const override { return {}; }
  int poly_degree() const override { return 2; }
};

}  // namespace

TEST_CASE("exponential growth") {
  const ModelPtr lin = linear_model(1);
  const Eigen::MatrixXd x = solve(*lin, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), {0.0, 0.5, 1.0}, tol(1e-10));
  CHECK(std::abs(x(2, 0) - std::exp(1.0)) / std::exp(1.0) < 1e-8);
  CHECK(std::abs(x(1, 0) - std::exp(0.5)) / std::exp(0.5) < 1e-8);
  CHECK(x(0, 0) == 1.0);
}

TEST_CASE("error falls with tolerance") {
  const ModelPtr lin = linear_model(1);
  std::vector<double> errs;
  for (double t : {1e-4, 1e-6, 1e-8, 1e-10}) {
    const Eigen::MatrixXd x = solve(*lin, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), {0.0, 5.0}, tol(t));
    errs.push_back(std::abs(x(1, 0) - std::exp(5.0)) / std::exp(5.0));
  }
  for (std::size_t k = 1; k < errs.size(); ++k) CHECK(errs[k] < errs[k - 1]);
  // Each factor 100 in tolerance buys well over a factor 10 in error.
  CHECK(errs[0] / errs[2] > 100.0);
}

TEST_CASE("fixed points stay fixed") {
  const Eigen::MatrixXd z = solve(*zero_model(2, 1), Eigen::VectorXd::Ones(1), Eigen::Vector2d(0.3, -2.0),
                                  {0.0, 1.0, 7.0, 20.0});
  for (int r = 0; r < 4; ++r) {
    CHECK(z(r, 0) == 0.3);
    CHECK(z(r, 1) == -2.0);
  }
  const Eigen::MatrixXd lv = solve(*lv_model(), Eigen::Vector4d(1, 1, 1, 1), Eigen::Vector2d(1, 1), {0.0, 10.0, 20.0});
  CHECK((lv.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("dense output matches restarted integration") {
  const ModelPtr fn = fn_model();
  const Eigen::Vector3d th(0.2, 0.2, 3.0);
  const Eigen::Vector2d x0(-1.0, 1.0);
  const Eigen::MatrixXd dense = solve(*fn, th, x0, uniform_grid({0.0, 20.0}, 401), tol(1e-10));
  const Eigen::MatrixXd coarse = solve(*fn, th, x0, {0.0, 7.3, 20.0}, tol(1e-10));
  const Eigen::MatrixXd at = solve(*fn, th, x0, {0.0, 20.0}, tol(1e-10));
  CHECK((dense.row(400) - at.row(1)).cwiseAbs().maxCoeff() < 1e-7);
  CHECK((coarse.row(2) - at.row(1)).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("blow-up reports the last time reached") {
  try {
    solve(Riccati{}, Eigen::VectorXd(0), Eigen::VectorXd::Ones(1), {0.0, 2.0});
    FAIL("expected SolverStepLimitError");
  } catch (const SolverStepLimitError& e) {
    CHECK(e.last_time() > 0.9);
    // Accepted steps may land a hair past the singularity at t = 1.
    CHECK(e.last_time() <= 1.0 + 1e-6);
  }
  SolveConfig few;
  few.max_steps = 3;
  CHECK_THROWS_AS(solve(*fn_model(), Eigen::Vector3d(0.2, 0.2, 3.0), Eigen::Vector2d(-1, 1), {0.0, 20.0}, few),
                  SolverStepLimitError);
}

TEST_CASE("trajectory rmse") {
  const ModelPtr fn = fn_model();
  const Eigen::Vector3d th(0.2, 0.2, 3.0);
  const Eigen::Vector2d x0(-1.0, 1.0);
  const TrajectoryRmse same = trajectory_rmse(*fn, th, x0, th, x0, {0.0, 20.0});
  CHECK(same.total < 1e-6);
  CHECK_FALSE(same.diverged);

  const Eigen::Vector3d th2(0.22, 0.18, 2.9);
  const Eigen::Vector2d x02(-0.9, 1.1);
  const TrajectoryRmse ab = trajectory_rmse(*fn, th2, x02, th, x0, {0.0, 20.0});
  const TrajectoryRmse ba = trajectory_rmse(*fn, th, x0, th2, x02, {0.0, 20.0});
  CHECK(ab.total == doctest::Approx(ba.total).epsilon(1e-12));
  CHECK(ab.total > 0.01);
  CHECK(ab.total == doctest::Approx(std::sqrt(ab.per_component.squaredNorm())).epsilon(1e-12));

  CHECK_THROWS_AS(trajectory_rmse(*fn, th, x0, th, x0, {0.0, 20.0}, 50), DimensionError);
}

TEST_CASE("diverging reconstruction is flagged") {
  const ModelPtr lin = linear_model(1);
  // exp(800) overflows.
  const TrajectoryRmse r = trajectory_rmse(*lin, Eigen::VectorXd::Constant(1, 40.0), Eigen::VectorXd::Ones(1),
                                           Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Ones(1), {0.0, 20.0});
  CHECK(r.diverged);
  CHECK(std::isinf(r.total));
}
