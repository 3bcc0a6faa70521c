#include <doctest.h>

#include <cmath>
#include <limits>

#include "colloc/checks.hpp"
#include "colloc/errors.hpp"
#include "colloc/harness.hpp"
#include "colloc/lambda_select.hpp"

using namespace colloc;

namespace {

Scenario fn_scenario(double noise, int n_obs) {
  Scenario sc;
  sc.name = "fn";
  sc.model = "fn";
  sc.theta = Eigen::Vector3d(0.2, 0.2, 3.0);
  sc.x0 = Eigen::Vector2d(-1.0, 1.0);
  sc.noise_sd = Eigen::Vector2d::Constant(noise);
  sc.times = uniform_grid({0.0, 20.0}, n_obs);
  sc.fit.num_basis = 83;
  sc.fit.quad_outer = 200;
  sc.fit.quad_inner = 5;
  return sc;
}

}  // namespace

TEST_CASE("overlap ratio") {
  CHECK(overlap_ratio({0.0, 1.0}, {0.0, 1.0}) == 1.0);
  CHECK(overlap_ratio({0.0, 1.0}, {2.0, 3.0}) == 0.0);
  CHECK(overlap_ratio({0.0, 2.0}, {1.0, 5.0}) == 0.5);
  CHECK(overlap_ratio({1.0, 2.0}, {0.0, 5.0}) == 1.0);
  CHECK_THROWS_AS(overlap_ratio({1.0, 1.0}, {0.0, 5.0}), DomainError);
}

TEST_CASE("ladder configuration") {
  LambdaConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.ladder(0) == 100.0);
  CHECK(cfg.ladder(2) == doctest::Approx(1e4));
  CHECK(cfg.max_steps() == 5);
  cfg.lambda0 = 1.0;
  cfg.lambda_star = 100.0;
  CHECK(cfg.max_steps() == 7);
  cfg.lambda_star = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = LambdaConfig{};
  cfg.alpha = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(to_string(StopReason::err_increase) == "err-increase");
}

TEST_CASE("derived seeds") {
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("discrepancy for a zero field and constant spline") {
  const BasisSpec basis = make_basis(4, 10, {0.0, 5.0});
  Observations data;
  data.times = uniform_grid({0.0, 5.0}, 11);
  data.values = Eigen::MatrixXd::Constant(11, 2, 3.0);
  const ProblemPtr pb = make_problem(zero_model(2, 1), basis, build_plan(basis, 20, 4), data, PriorKind::integral);
  const PosteriorSpec spec(pb, 1.0);
  const SplineCoefficients c = SplineCoefficients::Constant(2, 10, 3.0);
  CHECK(discrepancy_err(spec, Eigen::VectorXd::Ones(1), c) == 0.0);

  // Observation offsets scale Err quadratically when the integrals vanish.
  Observations shifted = data;
  shifted.values.array() = 3.0 + 0.5;
  shifted.values(4, 1) = std::numeric_limits<double>::quiet_NaN();
  Observations scaled = shifted;
  scaled.values.array() = 3.0 + 1.5;
  scaled.values(4, 1) = std::numeric_limits<double>::quiet_NaN();
  const double e1 = discrepancy_err(PosteriorSpec(make_problem(zero_model(2, 1), basis, build_plan(basis, 20, 4), shifted,
                                                               PriorKind::integral), 1.0),
                                    Eigen::VectorXd::Ones(1), c);
  const double e3 = discrepancy_err(PosteriorSpec(make_problem(zero_model(2, 1), basis, build_plan(basis, 20, 4), scaled,
                                                               PriorKind::integral), 1.0),
                                    Eigen::VectorXd::Ones(1), c);
  CHECK(e1 == doctest::Approx(21 * 0.25));
  CHECK(e3 == doctest::Approx(9.0 * e1).epsilon(1e-14));
}

TEST_CASE("discrepancy at the projected truth on noiseless data") {
  const Scenario sc = fn_scenario(0.0, 41);
  const ProblemPtr pb = prepare_problem(fn_model(), generate_data(sc, 1), sc.fit);
  const PosteriorState s = reference_state(*pb, "fn");
  const PosteriorSpec spec(pb, 1e3);
  const double err = discrepancy_err(spec, constrain_params(pb->model(), s.theta_u), s.coeffs);
  MESSAGE("Err at projected truth " << err);
  CHECK(err < 1e-3);
  CHECK(err == discrepancy_err(spec, constrain_params(pb->model(), s.theta_u), s.coeffs));
}

TEST_CASE("discrepancy at the projected truth shrinks with L") {
  double prev = std::numeric_limits<double>::infinity();
  for (int l : {43, 83, 163}) {
    Scenario sc = fn_scenario(0.0, 41);
    sc.fit.num_basis = l;
    const ProblemPtr pb = prepare_problem(fn_model(), generate_data(sc, 1), sc.fit);
    const PosteriorState s = reference_state(*pb, "fn");
    const double err = discrepancy_err(PosteriorSpec(pb, 1e3), constrain_params(pb->model(), s.theta_u), s.coeffs);
    MESSAGE("L=" << l << " Err " << err);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 1e-5);
}

TEST_CASE("selection invariants on a short run") {
  Scenario sc = fn_scenario(0.2, 21);
  sc.fit.num_basis = 23;
  sc.fit.quad_outer = 50;
  sc.fit.nuts.num_iterations = 120;
  sc.fit.nuts.num_warmup = 60;
  sc.fit.init_nuts = sc.fit.nuts;
  sc.fit.lambda.lambda0 = 1.0;
  sc.fit.lambda.lambda_star = 100.0;
  sc.fit.lambda.lambda_max = 1e4;
  const ProblemPtr pb = prepare_problem(fn_model(), generate_data(sc, 3), sc.fit);
  const InitialEstimate init = initialize(pb, sc.fit);
  int calls = 0;
  const LambdaSelection sel = select_lambda(pb, init, sc.fit.lambda, sc.fit.nuts, [&](const LambdaStep&) { ++calls; });
  const LambdaTrace& tr = sel.trace;
  CHECK(calls == static_cast<int>(tr.steps.size()));
  CHECK(static_cast<int>(tr.steps.size()) - 1 <= sc.fit.lambda.max_steps());
  CHECK_FALSE(tr.steps.front().sampled);
  bool on_ladder = false;
  for (int p = 0; p <= sc.fit.lambda.max_steps(); ++p) on_ladder = on_ladder || std::abs(tr.selected / sc.fit.lambda.ladder(p) - 1.0) < 1e-12;
  CHECK(on_ladder);
  CHECK(tr.steps[static_cast<std::size_t>(tr.selected_index)].lambda == tr.selected);
  CHECK(sel.fit.lambda == tr.selected);
  for (const auto& st : tr.steps) CHECK(st.err >= 0.0);
  if (tr.stop_reason == StopReason::err_increase) {
    CHECK(tr.steps[static_cast<std::size_t>(tr.selected_index)].err <
          tr.steps[static_cast<std::size_t>(tr.selected_index) + 1].err);
  }
  if (tr.stop_reason == StopReason::cap_reached) CHECK(tr.selected == doctest::Approx(1e4));
  // Warm starts: the theta means feed the next chain, so all stay positive.
  for (const auto& st : tr.steps) CHECK((st.theta_mean.array() > 0.0).all());
}
