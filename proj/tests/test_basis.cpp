#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "colloc/basis.hpp"
#include "colloc/errors.hpp"
#include "colloc/models.hpp"
#include "colloc/odesolve.hpp"

using namespace colloc;

namespace {

std::vector<double> grid(double a, double b, int n) {
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) t[static_cast<std::size_t>(k)] = a + (b - a) * k / (n - 1);
  return t;
}

}  // namespace

TEST_CASE("knot layout") {
  const BasisSpec fn = make_basis(4, 83, {0.0, 20.0});
  CHECK(fn.num_interior_knots() == 79);
  CHECK(fn.knots().size() == 87u);
  const auto bp = fn.breakpoints();
  REQUIRE(bp.size() == 81u);
  for (std::size_t k = 1; k < bp.size(); ++k) CHECK(bp[k] - bp[k - 1] == doctest::Approx(0.25).epsilon(1e-12));
  for (int k = 0; k < 4; ++k) {
    CHECK(fn.knots()[static_cast<std::size_t>(k)] == 0.0);
    CHECK(fn.knots()[86u - static_cast<std::size_t>(k)] == 20.0);
  }
  CHECK(make_basis(4, 4, {0.0, 1.0}).num_interior_knots() == 0);
  CHECK(make_basis(4, 43, {1908.0, 1928.0}).num_interior_knots() == 39);
}

TEST_CASE("invalid dimensions") {
  CHECK_THROWS_AS(make_basis(4, 3, {0.0, 1.0}), DimensionError);
  CHECK_THROWS_AS(make_basis(1, 4, {0.0, 1.0}), DimensionError);
  CHECK_THROWS_AS(make_basis(4, 10, {1.0, 1.0}), DimensionError);
  const BasisSpec spec = make_basis(4, 10, {0.0, 1.0});
  const std::vector<double> bad{0.5, 1.2};
  CHECK_THROWS_AS(eval_basis(spec, bad), DomainError);
}

TEST_CASE("minimal basis is Bernstein") {
  const BasisSpec spec = make_basis(4, 4, {0.0, 1.0});
  const auto t = grid(0.0, 1.0, 101);
  const BasisMatrix bm = eval_basis(spec, t);
  const double binom[4] = {1, 3, 3, 1};
  for (int r = 0; r < bm.rows(); ++r) {
    const double s = t[static_cast<std::size_t>(r)];
    for (int k = 0; k < 4; ++k) {
      const double b = binom[k] * std::pow(s, k) * std::pow(1.0 - s, 3 - k);
      CHECK(bm.values(r, k) == doctest::Approx(b).epsilon(1e-13));
    }
  }
}

TEST_CASE("partition of unity and derivative sums") {
  const BasisSpec spec = make_basis(4, 83, {0.0, 20.0});
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  std::vector<double> t(1000);
  for (auto& s : t) s = u(rng);
  t.front() = 0.0;
  t.back() = 20.0;
  const BasisMatrix bm = eval_basis(spec, t);
  CHECK((bm.values.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(bm.derivs.rowwise().sum().array().abs().maxCoeff() < 1e-10);
  CHECK((bm.values.array() >= 0.0).all());
}

TEST_CASE("clamped endpoints") {
  const BasisSpec spec = make_basis(4, 12, {0.0, 3.0});
  const std::vector<double> ends{0.0, 3.0};
  const BasisMatrix bm = eval_basis(spec, ends);
  CHECK(bm.values(0, 0) == 1.0);
  CHECK(bm.values.row(0).tail(11).cwiseAbs().maxCoeff() == 0.0);
  CHECK(bm.values(1, 11) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(bm.values.row(1).head(11).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("constant reproduction") {
  const BasisSpec spec = make_basis(4, 30, {0.0, 5.0});
  const auto t = grid(0.0, 5.0, 77);
  const BasisMatrix bm = eval_basis(spec, t);
  const std::vector<double> c(30, 2.5);
  for (int r = 0; r < bm.rows(); ++r) {
    CHECK(bm.value(r, c.data()) == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(std::abs(bm.derivative(r, c.data())) < 1e-12);
  }
}

TEST_CASE("derivatives match central differences") {
  const BasisSpec spec = make_basis(4, 20, {0.0, 10.0});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 9.99);
  const double h = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const double t = u(rng);
    const std::vector<double> pts{t - h, t, t + h};
    const BasisMatrix bm = eval_basis(spec, pts);
    for (int l = 0; l < 20; ++l) {
      const double fd = (bm.values(2, l) - bm.values(0, l)) / (2 * h);
      const double a = bm.derivs(1, l);
      if (std::abs(a) < 1e-8 && std::abs(fd) < 1e-8) continue;
      worst = std::max(worst, std::abs(a - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("local evaluation agrees with the dense rows") {
  const BasisSpec spec = make_basis(4, 15, {-1.0, 2.0});
  for (double t : {-1.0, -0.3, 0.0, 0.77, 2.0}) {
    const std::vector<double> one{t};
    const BasisMatrix bm = eval_basis(spec, one);
    const LocalBasis loc = eval_local(spec, t, 2);
    for (int j = 0; j < 4; ++j) {
      CHECK(loc.ders(0, j) == doctest::Approx(bm.values(0, loc.first + j)).epsilon(1e-14));
      CHECK(loc.ders(1, j) == doctest::Approx(bm.derivs(0, loc.first + j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("polynomial reproduction") {
  const BasisSpec spec = make_basis(4, 25, {0.0, 4.0});
  const auto t = grid(0.0, 4.0, 200);
  for (int deg = 0; deg < 4; ++deg) {
    Eigen::MatrixXd y(200, 1);
    for (int k = 0; k < 200; ++k) y(k, 0) = std::pow(t[static_cast<std::size_t>(k)] - 1.3, deg) + 0.5;
    const SplineCoefficients c = smooth_data(spec, t, y, 0.0);
    const auto test_t = grid(0.0, 4.0, 333);
    const BasisMatrix bm = eval_basis(spec, test_t);
    double err = 0.0;
    for (int r = 0; r < bm.rows(); ++r) {
      const double exact = std::pow(test_t[static_cast<std::size_t>(r)] - 1.3, deg) + 0.5;
      err = std::max(err, std::abs(bm.value(r, c.data()) - exact));
    }
    CHECK(err < 1e-8);
  }
}

TEST_CASE("smoothing recovers an exact spline without penalty") {
  const BasisSpec spec = make_basis(4, 12, {0.0, 6.0});
  Eigen::RowVectorXd c_true(12);
  for (int l = 0; l < 12; ++l) c_true[l] = std::sin(0.7 * l) + 0.1 * l;
  const auto t = grid(0.0, 6.0, 60);
  const BasisMatrix bm = eval_basis(spec, t);
  Eigen::MatrixXd y(60, 1);
  for (int r = 0; r < 60; ++r) y(r, 0) = bm.value(r, c_true.data());
  const SplineCoefficients c = smooth_data(spec, t, y, 0.0);
  CHECK((c.row(0) - c_true).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("constant data is penalty free") {
  const BasisSpec spec = make_basis(4, 20, {0.0, 20.0});
  const auto t = grid(0.0, 20.0, 41);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(41, 2, 5.0);
  for (double pen : {0.0, 0.1, 10.0, 1e4}) {
    const SplineCoefficients c = smooth_data(spec, t, y, pen);
    CHECK((c.array() - 5.0).abs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("large penalty tends to the least-squares line") {
  const BasisSpec spec = make_basis(4, 15, {0.0, 10.0});
  const auto t = grid(0.0, 10.0, 31);
  Eigen::MatrixXd y(31, 1);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 31; ++k) y(k, 0) = std::sin(t[static_cast<std::size_t>(k)]) + 0.3 * nd(rng);
  Eigen::MatrixXd design(31, 2);
  for (int k = 0; k < 31; ++k) design.row(k) << 1.0, t[static_cast<std::size_t>(k)];
  const Eigen::Vector2d line = design.colPivHouseholderQr().solve(y.col(0));
  const SplineCoefficients c = smooth_data(spec, t, y, 1e9);
  const auto test_t = grid(0.0, 10.0, 101);
  const BasisMatrix bm = eval_basis(spec, test_t);
  double err = 0.0;
  for (int r = 0; r < bm.rows(); ++r) {
    err = std::max(err, std::abs(bm.value(r, c.data()) - (line[0] + line[1] * test_t[static_cast<std::size_t>(r)])));
  }
  CHECK(err < 1e-4);
}

TEST_CASE("smoothing noisy FitzHugh-Nagumo data") {
  // Residual scale should land near the generating noise level. Penalty 0.1
  // alone leaves about 0.18 RMS on noiseless data at the sharp transitions.
  const ModelPtr fn = fn_model();
  const auto t = grid(0.0, 20.0, 41);
  SolveConfig tight;
  tight.rel_tol = tight.abs_tol = 1e-10;
  const Eigen::MatrixXd x = solve(*fn, Eigen::Vector3d(0.2, 0.2, 3.0), Eigen::Vector2d(-1.0, 1.0), t, tight);
  const BasisSpec spec = make_basis(4, 83, {0.0, 20.0});
  double total_ss = 0.0;
  int count = 0;
  for (int rep = 0; rep < 20; ++rep) {
    std::mt19937_64 rng(100 + rep);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd y = x;
    for (Eigen::Index k = 0; k < y.size(); ++k) y.data()[k] += 0.2 * nd(rng);
    const SplineCoefficients c = smooth_data(spec, t, y, 0.1);
    const BasisMatrix bm = eval_basis(spec, t);
    for (int i = 0; i < 2; ++i) {
      const Eigen::RowVectorXd ci = c.row(i);
      for (int r = 0; r < 41; ++r) {
        const double e = y(r, i) - bm.value(r, ci.data());
        total_ss += e * e;
        ++count;
      }
    }
  }
  const double sd = std::sqrt(total_ss / count);
  MESSAGE("pooled residual sd " << sd);
  CHECK(sd > 0.15);
  CHECK(sd < 0.25);
}

TEST_CASE("missing entries and rank deficiency") {
  const BasisSpec spec = make_basis(4, 20, {0.0, 10.0});
  const auto t = grid(0.0, 10.0, 21);
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(21, 2, 1.0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  SUBCASE("too few observations") {
    for (int k = 3; k < 21; ++k) y(k, 1) = nan;
    CHECK_THROWS_AS(smooth_data(spec, t, y, 0.1), DimensionError);
  }
  SUBCASE("singular normal matrix names the component") {
    // Component 1 only seen on the first two knot spans: most coefficients
    // are unidentified without a penalty.
    for (int k = 3; k < 21; ++k) y(k, 1) = nan;
    y(0, 1) = y(1, 1) = y(2, 1) = 1.0;
    Eigen::MatrixXd y2(22, 2);
    std::vector<double> t2 = t;
    t2.insert(t2.begin() + 1, 0.1);
    y2.row(0) = y.row(0);
    y2.row(1) << 1.0, 1.0;
    y2.bottomRows(20) = y.bottomRows(20);
    try {
      smooth_data(spec, t2, y2, 0.0);
      FAIL("expected RankDeficiencyError");
    } catch (const RankDeficiencyError& e) {
      CHECK(e.component() == 1);
    }
  }
  SUBCASE("missing entries are skipped") {
    y(5, 0) = nan;
    y(9, 0) = nan;
    const SplineCoefficients c = smooth_data(spec, t, y, 0.1);
    CHECK((c.array() - 1.0).abs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("basis evaluation counter") {
  const BasisSpec spec = make_basis(4, 10, {0.0, 1.0});
  const auto before = basis_evaluation_count();
  const auto t = grid(0.0, 1.0, 17);
  eval_basis(spec, t);
  CHECK(basis_evaluation_count() - before == 17u);
}
