#include <doctest.h>

#include <cmath>

#include "colloc/errors.hpp"
#include "colloc/models.hpp"

using namespace colloc;

namespace {

std::vector<double> eval(const OdeModel& m, std::vector<double> x, std::vector<double> th) {
  std::vector<double> out(static_cast<std::size_t>(m.dim_state()));
  m.rhs(x, th, 0.0, out);
  return out;
}

// FitzHugh-Nagumo with a sign error in dF1/dR.
class BrokenFn : public OdeModel {
 public:
  std::string name() const override { return "broken"; }
  int dim_state() const override { return 2; }
  int dim_params() const override { return 3; }
  void rhs(std::span<const double> x, std::span<const double> th, double t, std::span<double> f) const override {
    inner_->rhs(x, th, t, f);
  }
  void jac_x(std::span<const double> x, std::span<const double> th, double t, std::span<double> j) const override {
    inner_->jac_x(x, th, t, j);
    j[1] = -j[1];
  }
  void jac_theta(std::span<const double> x, std::span<const double> th, double t, std::span<double> j) const override {
    inner_->jac_theta(x, th, t, j);
  }
  std::vector<bool> param_positive() const override { return {true, true, true}; }
  int poly_degree() const override { return 3; }

 private:
  ModelPtr inner_ = fn_model();
};

}  // namespace

TEST_CASE("FitzHugh-Nagumo field") {
  const ModelPtr m = fn_model();
  CHECK(m->dim_state() == 2);
  CHECK(m->dim_params() == 3);
  CHECK(m->poly_degree() == 3);
  CHECK(m->param_positive() == std::vector<bool>{true, true, true});
  const auto f = eval(*m, {-1.0, 1.0}, {0.2, 0.2, 3.0});
  CHECK(f[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  std::vector<double> j(4);
  const std::vector<double> x{0.0, 0.0}, th{0.2, 0.2, 3.0};
  m->jac_x(x, th, 0.0, j);
  CHECK(j[0] == doctest::Approx(3.0));
}

TEST_CASE("Lotka-Volterra field") {
  const ModelPtr m = lv_model();
  CHECK(m->dim_params() == 4);
  CHECK(m->poly_degree() == 2);
  const auto eq = eval(*m, {1.0, 1.0}, {1.0, 1.0, 1.0, 1.0});
  CHECK(eq[0] == 0.0);
  CHECK(eq[1] == 0.0);
  const auto f = eval(*m, {24.27, 12.22}, {0.720, 0.028, 0.496, 0.013});
  CHECK(f[0] == doctest::Approx(0.720 * 24.27 - 0.028 * 24.27 * 12.22).epsilon(1e-14));
  CHECK(f[0] == doctest::Approx(9.170).epsilon(1e-3));
  CHECK(f[1] == doctest::Approx(-0.496 * 12.22 + 0.013 * 24.27 * 12.22).epsilon(1e-14));
  CHECK(f[1] == doctest::Approx(-2.206).epsilon(1e-3));
  std::vector<double> j(8);
  const std::vector<double> x{2.0, 3.0}, th{1.0, 1.0, 1.0, 1.0};
  m->jac_theta(x, th, 0.0, j);
  CHECK(j == std::vector<double>{2.0, -6.0, 0.0, 0.0, 0.0, 0.0, -3.0, 6.0});
}

TEST_CASE("Jacobian self-check") {
  CHECK(check_jacobians(*fn_model(), 100, 1).max_rel_error() < 1e-6);
  CHECK(check_jacobians(*lv_model(), 100, 2).max_rel_error() < 1e-6);
  CHECK(check_jacobians(*linear_model(3), 20, 3).max_rel_error() < 1e-6);
  CHECK_THROWS_AS(check_jacobians(BrokenFn{}, 10, 4), ValidationError);
}

TEST_CASE("finite-difference wrapper") {
  ModelDefinition def;
  def.name = "logistic";
  def.dim_state = 1;
  def.dim_params = 2;
  def.rhs = [](std::span<const double> x, std::span<const double> th, double, std::span<double> f) {
    f[0] = th[0] * x[0] * (1.0 - x[0] / th[1]);
  };
  def.param_positive = {true, true};
  def.poly_degree = 2;
  const ModelPtr m = finite_difference_model(def);
  CHECK(check_jacobians(*m, 50, 5).max_rel_error() < 1e-6);
  std::vector<double> jt(2);
  const std::vector<double> x{2.0}, th{0.5, 10.0};
  m->jac_theta(x, th, 0.0, jt);
  CHECK(jt[0] == doctest::Approx(2.0 * 0.8).epsilon(1e-7));
  CHECK(jt[1] == doctest::Approx(0.5 * 4.0 / 100.0).epsilon(1e-6));
}

TEST_CASE("registry") {
  auto& reg = ModelRegistry::instance();
  CHECK(reg.contains("fn"));
  CHECK(reg.contains("lv"));
  CHECK(reg.create("fn")->name() == "fn");
  CHECK_THROWS_AS(reg.create("nope"), ConfigError);
  reg.add("linear2", [] { return linear_model(2); });
  CHECK(reg.contains("linear2"));
  CHECK(reg.create("linear2")->dim_state() == 2);
}

TEST_CASE("fields stay finite on bounded boxes") {
  const ModelPtr fn = fn_model(), lv = lv_model();
  for (double v = -5.0; v <= 5.0; v += 0.5) {
    for (double r = -5.0; r <= 5.0; r += 0.5) {
      for (double d : eval(*fn, {v, r}, {0.2, 0.2, 3.0})) CHECK(std::isfinite(d));
      for (double d : eval(*lv, {v, r}, {0.7, 0.03, 0.5, 0.01})) CHECK(std::isfinite(d));
    }
  }
}
