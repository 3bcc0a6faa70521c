#include "colloc/models.hpp"

#include <cmath>
#include <random>

#include "colloc/errors.hpp"

namespace colloc {

std::vector<std::string> OdeModel::state_names() const {
  std::vector<std::string> out;
  for (int i = 0; i < dim_state(); ++i) out.push_back("x" + std::to_string(i + 1));
  return out;
}

std::vector<std::string> OdeModel::param_names() const {
  std::vector<std::string> out;
  for (int p = 0; p < dim_params(); ++p) out.push_back("theta" + std::to_string(p + 1));
  return out;
}

namespace {

class FitzHughNagumo final : public OdeModel {
 public:
  std::string name() const override { return "fn"; }
  int dim_state() const override { return 2; }
  int dim_params() const override { return 3; }

  void rhs(std::span<const double> x, std::span<const double> th, double,
           std::span<double> out) const override {
    const double v = x[0], r = x[1];
    const double a = th[0], b = th[1], c = th[2];
    out[0] = c * (v - v * v * v / 3.0 + r);
    out[1] = -(v - a + b * r) / c;
  }

  void jac_x(std::span<const double> x, std::span<const double> th, double,
             std::span<double> out) const override {
    const double v = x[0];
    const double b = th[1], c = th[2];
    out[0] = c * (1.0 - v * v);
    out[1] = c;
    out[2] = -1.0 / c;
    out[3] = -b / c;
  }

  void jac_theta(std::span<const double> x, std::span<const double> th, double,
                 std::span<double> out) const override {
    const double v = x[0], r = x[1];
    const double a = th[0], b = th[1], c = th[2];
    out[0] = 0.0;
    out[1] = 0.0;
    out[2] = v - v * v * v / 3.0 + r;
    out[3] = 1.0 / c;
    out[4] = -r / c;
    out[5] = (v - a + b * r) / (c * c);
  }

  std::vector<bool> param_positive() const override { return {true, true, true}; }
  int poly_degree() const override { return 3; }
  std::vector<std::string> state_names() const override { return {"V", "R"}; }
  std::vector<std::string> param_names() const override { return {"a", "b", "c"}; }
};

class LotkaVolterra final : public OdeModel {
 public:
  std::string name() const override { return "lv"; }
  int dim_state() const override { return 2; }
  int dim_params() const override { return 4; }

  void rhs(std::span<const double> x, std::span<const double> th, double,
           std::span<double> out) const override {
    out[0] = th[0] * x[0] - th[1] * x[0] * x[1];
    out[1] = -th[2] * x[1] + th[3] * x[0] * x[1];
  }

  void jac_x(std::span<const double> x, std::span<const double> th, double,
             std::span<double> out) const override {
    out[0] = th[0] - th[1] * x[1];
    out[1] = -th[1] * x[0];
    out[2] = th[3] * x[1];
    out[3] = -th[2] + th[3] * x[0];
  }

  void jac_theta(std::span<const double> x, std::span<const double>, double,
                 std::span<double> out) const override {
    out[0] = x[0];
    out[1] = -x[0] * x[1];
    out[2] = 0.0;
    out[3] = 0.0;
    out[4] = 0.0;
    out[5] = 0.0;
    out[6] = -x[1];
    out[7] = x[0] * x[1];
  }

  std::vector<bool> param_positive() const override { return {true, true, true, true}; }
  int poly_degree() const override { return 2; }
  std::vector<std::string> state_names() const override { return {"hare", "lynx"}; }
};

class ZeroField final : public OdeModel {
 public:
  ZeroField(int dim_state, int dim_params) : dim_state_(dim_state), dim_params_(dim_params) {}
  std::string name() const override { return "zero"; }
  int dim_state() const override { return dim_state_; }
  int dim_params() const override { return dim_params_; }
  void rhs(std::span<const double>, std::span<const double>, double,
           std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  void jac_x(std::span<const double>, std::span<const double>, double,
             std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  void jac_theta(std::span<const double>, std::span<const double>, double,
                 std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  std::vector<bool> param_positive() const override {
    return std::vector<bool>(static_cast<std::size_t>(dim_params_), true);
  }
  int poly_degree() const override { return 1; }

 private:
  int dim_state_;
  int dim_params_;
};

class LinearField final : public OdeModel {
 public:
  explicit LinearField(int dim) : dim_(dim) {}
  std::string name() const override { return "linear"; }
  int dim_state() const override { return dim_; }
  int dim_params() const override { return dim_; }
  void rhs(std::span<const double> x, std::span<const double> th, double,
           std::span<double> out) const override {
    for (int i = 0; i < dim_; ++i) out[i] = th[i] * x[i];
  }
  void jac_x(std::span<const double>, std::span<const double> th, double,
             std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < dim_; ++i) out[i * dim_ + i] = th[i];
  }
  void jac_theta(std::span<const double> x, std::span<const double>, double,
                 std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < dim_; ++i) out[i * dim_ + i] = x[i];
  }
  std::vector<bool> param_positive() const override {
    return std::vector<bool>(static_cast<std::size_t>(dim_), false);
  }
  int poly_degree() const override { return 1; }

 private:
  int dim_;
};

class FiniteDifferenceField final : public OdeModel {
 public:
  explicit FiniteDifferenceField(ModelDefinition def) : def_(std::move(def)) {
    if (!def_.rhs) throw ConfigError("finite_difference_model: missing rhs");
    if (def_.param_positive.empty()) def_.param_positive.assign(static_cast<std::size_t>(def_.dim_params), false);
    if (static_cast<int>(def_.param_positive.size()) != def_.dim_params) {
      throw DimensionError("finite_difference_model: param_positive has the wrong length");
    }
  }
  std::string name() const override { return def_.name; }
  int dim_state() const override { return def_.dim_state; }
  int dim_params() const override { return def_.dim_params; }
  void rhs(std::span<const double> x, std::span<const double> th, double t,
           std::span<double> out) const override {
    def_.rhs(x, th, t, out);
  }
  void jac_x(std::span<const double> x, std::span<const double> th, double t,
             std::span<double> out) const override {
    differentiate(x, th, t, /*wrt_state=*/true, out);
  }
  void jac_theta(std::span<const double> x, std::span<const double> th, double t,
                 std::span<double> out) const override {
    differentiate(x, th, t, /*wrt_state=*/false, out);
  }
  std::vector<bool> param_positive() const override { return def_.param_positive; }
  int poly_degree() const override { return def_.poly_degree; }
  std::vector<std::string> state_names() const override {
    return def_.state_names.empty() ? OdeModel::state_names() : def_.state_names;
  }
  std::vector<std::string> param_names() const override {
    return def_.param_names.empty() ? OdeModel::param_names() : def_.param_names;
  }

 private:
  void differentiate(std::span<const double> x, std::span<const double> th, double t, bool wrt_state,
                     std::span<double> out) const {
    const int n_i = def_.dim_state;
    const int n_cols = wrt_state ? def_.dim_state : def_.dim_params;
    std::vector<double> xs(x.begin(), x.end()), ts(th.begin(), th.end());
    std::vector<double> fp(static_cast<std::size_t>(n_i)), fm(static_cast<std::size_t>(n_i));
    for (int k = 0; k < n_cols; ++k) {
      double& v = wrt_state ? xs[static_cast<std::size_t>(k)] : ts[static_cast<std::size_t>(k)];
      const double saved = v;
      const double h = 1e-6 * std::max(1.0, std::abs(saved));
      v = saved + h;
      def_.rhs(xs, ts, t, fp);
      v = saved - h;
      def_.rhs(xs, ts, t, fm);
      v = saved;
      for (int i = 0; i < n_i; ++i) {
        out[static_cast<std::size_t>(i * n_cols + k)] =
            (fp[static_cast<std::size_t>(i)] - fm[static_cast<std::size_t>(i)]) / (2.0 * h);
      }
    }
  }

  ModelDefinition def_;
};

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

}  // namespace

ModelPtr fn_model() { return std::make_shared<FitzHughNagumo>(); }
ModelPtr lv_model() { return std::make_shared<LotkaVolterra>(); }
ModelPtr zero_model(int dim_state, int dim_params) {
  if (dim_state < 1 || dim_params < 0) throw DimensionError("zero_model: invalid dimensions");
  return std::make_shared<ZeroField>(dim_state, dim_params);
}
ModelPtr linear_model(int dim_state) {
  if (dim_state < 1) throw DimensionError("linear_model: invalid dimension");
  return std::make_shared<LinearField>(dim_state);
}
ModelPtr finite_difference_model(ModelDefinition def) {
  return std::make_shared<FiniteDifferenceField>(std::move(def));
}

JacobianReport check_jacobians(const OdeModel& model, int trials, std::uint64_t seed) {
  if (trials < 1) throw DimensionError("check_jacobians: trials must be >= 1");
  const int n_i = model.dim_state();
  const int n_p = model.dim_params();
  const std::vector<bool> positive = model.param_positive();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> state_dist(-2.0, 2.0);
  std::uniform_real_distribution<double> pos_dist(0.1, 3.0);
  std::uniform_real_distribution<double> time_dist(0.0, 20.0);

  std::vector<double> x(static_cast<std::size_t>(n_i)), th(static_cast<std::size_t>(n_p));
  std::vector<double> jx(static_cast<std::size_t>(n_i * n_i)), jt(static_cast<std::size_t>(n_i * n_p));
  std::vector<double> fp(static_cast<std::size_t>(n_i)), fm(static_cast<std::size_t>(n_i));
  JacobianReport report;
  report.trials = trials;
  constexpr double h = 1e-6;
  for (int trial = 0; trial < trials; ++trial) {
    for (auto& v : x) v = state_dist(rng);
    for (int p = 0; p < n_p; ++p) {
      th[static_cast<std::size_t>(p)] = positive[static_cast<std::size_t>(p)] ? pos_dist(rng) : state_dist(rng);
    }
    const double t = time_dist(rng);
    model.jac_x(x, th, t, jx);
    model.jac_theta(x, th, t, jt);
    for (int k = 0; k < n_i; ++k) {
      const double saved = x[static_cast<std::size_t>(k)];
      x[static_cast<std::size_t>(k)] = saved + h;
      model.rhs(x, th, t, fp);
      x[static_cast<std::size_t>(k)] = saved - h;
      model.rhs(x, th, t, fm);
      x[static_cast<std::size_t>(k)] = saved;
      for (int i = 0; i < n_i; ++i) {
        const double fd = (fp[static_cast<std::size_t>(i)] - fm[static_cast<std::size_t>(i)]) / (2.0 * h);
        report.max_rel_error_x =
            std::max(report.max_rel_error_x, rel_error(jx[static_cast<std::size_t>(i * n_i + k)], fd));
      }
    }
    for (int k = 0; k < n_p; ++k) {
      const double saved = th[static_cast<std::size_t>(k)];
      th[static_cast<std::size_t>(k)] = saved + h;
      model.rhs(x, th, t, fp);
      th[static_cast<std::size_t>(k)] = saved - h;
      model.rhs(x, th, t, fm);
      th[static_cast<std::size_t>(k)] = saved;
      for (int i = 0; i < n_i; ++i) {
        const double fd = (fp[static_cast<std::size_t>(i)] - fm[static_cast<std::size_t>(i)]) / (2.0 * h);
        report.max_rel_error_theta =
            std::max(report.max_rel_error_theta, rel_error(jt[static_cast<std::size_t>(i * n_p + k)], fd));
      }
    }
  }
  if (report.max_rel_error() > 1e-5) {
    throw ValidationError("check_jacobians: model '" + model.name() +
                          "' Jacobian disagrees with finite differences (max rel. error " +
                          std::to_string(report.max_rel_error()) + ")");
  }
  return report;
}

ModelRegistry::ModelRegistry() {
  entries_.emplace_back("fn", [] { return fn_model(); });
  entries_.emplace_back("lv", [] { return lv_model(); });
}

ModelRegistry& ModelRegistry::instance() {
  static ModelRegistry registry;
  return registry;
}

void ModelRegistry::add(const std::string& name, Factory factory) {
  std::lock_guard lock(mutex_);
  for (auto& [n, f] : entries_) {
    if (n == name) {
      f = std::move(factory);
      return;
    }
  }
  entries_.emplace_back(name, std::move(factory));
}

bool ModelRegistry::contains(const std::string& name) const {
  std::lock_guard lock(mutex_);
  for (const auto& e : entries_) {
    if (e.first == name) return true;
  }
  return false;
}

ModelPtr ModelRegistry::create(const std::string& name) const {
  Factory f;
  {
    std::lock_guard lock(mutex_);
    for (const auto& e : entries_) {
      if (e.first == name) f = e.second;
    }
  }
  if (!f) throw ConfigError("unknown model '" + name + "'");
  return f();
}

std::vector<std::string> ModelRegistry::names() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

}  // namespace colloc
