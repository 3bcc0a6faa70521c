#include <doctest.h>

#include <cmath>

#include "colloc/errors.hpp"
#include "colloc/harness.hpp"
#include "colloc/odesolve.hpp"

using namespace colloc;

namespace {

Scenario small_fn(int reps) {
  Scenario sc;
  sc.name = "small";
  sc.model = "fn";
  sc.theta = Eigen::Vector3d(0.2, 0.2, 3.0);
  sc.x0 = Eigen::Vector2d(-1.0, 1.0);
  sc.noise_sd = Eigen::Vector2d::Constant(0.2);
  sc.times = uniform_grid({0.0, 20.0}, 21);
  sc.fit.num_basis = 23;
  sc.fit.quad_outer = 50;
  sc.fit.quad_inner = 5;
  sc.fit.lambda.lambda0 = 1.0;
  sc.fit.lambda.lambda_star = 10.0;
  sc.fit.lambda.lambda_max = 100.0;
  sc.fit.nuts.num_iterations = 100;
  sc.fit.nuts.num_warmup = 50;
  sc.fit.init_nuts = sc.fit.nuts;
  sc.replications = reps;
  sc.seed = 11;
  sc.rmse_grid = 201;
  return sc;
}

}  // namespace

TEST_CASE("noiseless data matches the solver") {
  Scenario sc = small_fn(1);
  sc.noise_sd.setZero();
  const Observations d = generate_data(sc, 5);
  const Eigen::MatrixXd x = solve(*fn_model(), sc.theta, sc.x0, sc.times, {1e-10, 1e-10});
  CHECK((d.values - x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(d.values(0, 0) == -1.0);
}

TEST_CASE("noise is reproducible and scaled") {
  Scenario sc = small_fn(1);
  sc.times = uniform_grid({0.0, 20.0}, 2001);
  Scenario clean = sc;
  clean.noise_sd.setZero();
  const Observations a = generate_data(sc, 5), b = generate_data(sc, 5), c = generate_data(sc, 6);
  CHECK(a.values == b.values);
  CHECK_FALSE(a.values == c.values);
  const Eigen::MatrixXd r = a.values - generate_data(clean, 5).values;
  for (int i = 0; i < 2; ++i) {
    const double sd = std::sqrt(r.col(i).squaredNorm() / r.rows());
    CHECK(sd == doctest::Approx(0.2).epsilon(0.08));
  }
}

TEST_CASE("per-component designs leave gaps") {
  Scenario sc = small_fn(1);
  sc.times = {0.0, 1.0, 2.0, 3.0};
  sc.component_times = {{0.0, 2.0}, {0.0, 1.0, 2.0, 3.0}};
  const Observations d = generate_data(sc, 1);
  CHECK(d.count_observed(0) == 2);
  CHECK(d.count_observed(1) == 4);
  CHECK(std::isnan(d.values(1, 0)));
  sc.component_times = {{0.0, 2.5}, {0.0}};
  CHECK_THROWS_AS(sc.validate(), ConfigError);
}

TEST_CASE("initialization") {
  const Scenario sc = small_fn(1);
  const ProblemPtr pb = prepare_problem(fn_model(), generate_data(sc, 2), sc.fit);
  const InitialEstimate init = initialize(pb, sc.fit);
  CHECK_FALSE(init.flat_target);
  CHECK((init.theta_hat.array() > 0.0).all());
  CHECK((init.theta_lower.array() <= init.theta_hat.array()).all());
  CHECK((init.theta_hat.array() <= init.theta_upper.array()).all());
  CHECK(std::exp(init.state.log_sigma[0]) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(init.state.coeffs.rows() == 2);
  CHECK(init.state.coeffs.cols() == 23);
}

TEST_CASE("zero field gives a flat initialization target") {
  Scenario sc = small_fn(1);
  const Observations d = generate_data(sc, 2);
  const ProblemPtr pb = prepare_problem(zero_model(2, 3), d, sc.fit);
  const InitialEstimate init = initialize(pb, sc.fit);
  CHECK(init.flat_target);
  CHECK(init.theta_hat.size() == 3);
}

TEST_CASE("domain handling") {
  Scenario sc = small_fn(1);
  Observations d = generate_data(sc, 2);
  for (double& t : d.times) t += 100.0;
  FitSettings fs = sc.fit;
  fs.domain = Interval{100.0, 120.0};
  const ProblemPtr pb = prepare_problem(fn_model(), d, fs);
  CHECK(pb->time_offset() == 100.0);
  CHECK(pb->data().times.front() == 0.0);
  fs.domain = Interval{105.0, 120.0};
  CHECK_THROWS_AS(prepare_problem(fn_model(), d, fs), DomainError);
}

TEST_CASE("median and interquartile range") {
  const Spread s = median_iqr({4.0, 1.0, 3.0, 2.0, 5.0});
  CHECK(s.median == 3.0);
  CHECK(s.iqr == 2.0);
  const Spread one = median_iqr({7.0});
  CHECK(one.median == 7.0);
  CHECK(one.iqr == 0.0);
}

TEST_CASE("study aggregation, determinism and threading") {
  const Scenario sc = small_fn(3);
  const StudyResult serial = run_study(sc, 1);
  REQUIRE(serial.replications.size() == 3);
  const StudyAggregates& ag = serial.aggregates;
  CHECK(ag.succeeded + ag.failed == 3);
  // Recompute the aggregates from the per-replication records.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3), sq = Eigen::VectorXd::Zero(3);
  int n = 0;
  for (const auto& r : serial.replications) {
    CHECK(r.index == n);
    if (!r.ok) continue;
    mean += r.theta_hat;
    sq += (r.theta_hat - sc.theta).array().square().matrix();
    ++n;
  }
  REQUIRE(n == ag.succeeded);
  if (n > 0) {
    for (int k = 0; k < 3; ++k) {
      CHECK(ag.theta_mean[k] == doctest::Approx(mean[k] / n).epsilon(1e-12));
      CHECK(ag.theta_rmse[k] == doctest::Approx(std::sqrt(sq[k] / n)).epsilon(1e-12));
    }
  }
  const StudyResult again = run_study(sc, 1);
  const StudyResult threaded = run_study(sc, 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(serial.replications[k].theta_hat == again.replications[k].theta_hat);
    CHECK(serial.replications[k].theta_hat == threaded.replications[k].theta_hat);
    CHECK(serial.replications[k].lambda_hat == threaded.replications[k].lambda_hat);
  }
}

TEST_CASE("single replication") {
  const StudyResult st = run_study(small_fn(1), 1);
  REQUIRE(st.replications.size() == 1);
  if (st.aggregates.succeeded == 1) {
    CHECK(st.aggregates.rmse_total.iqr == 0.0);
    CHECK(st.aggregates.rmse_total.median == st.replications[0].rmse.total);
  }
}

TEST_CASE("bands are flat for a constant chain") {
  const BasisSpec b = make_basis(4, 8, {0.0, 1.0});
  Observations d;
  d.times = uniform_grid({0.0, 1.0}, 5);
  d.values = Eigen::MatrixXd::Constant(5, 1, 2.0);
  const ProblemPtr pb = make_problem(zero_model(1, 1), b, build_plan(b, 10, 4), d, PriorKind::integral);
  Chain chain;
  chain.draws = Eigen::MatrixXd::Zero(20, pb->dim());
  chain.draws.block(0, 1, 20, 8).setConstant(2.0);
  const TrajectoryBands bands = spline_bands(*pb, chain, 11);
  REQUIRE(bands.times.size() == 11);
  CHECK((bands.mean.array() - 2.0).abs().maxCoeff() < 1e-12);
  CHECK((bands.upper - bands.lower).cwiseAbs().maxCoeff() < 1e-12);
}
