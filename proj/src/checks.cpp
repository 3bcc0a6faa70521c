#include "colloc/checks.hpp"

#include <cmath>
#include <random>

#include "colloc/basis.hpp"
#include "colloc/errors.hpp"
#include "colloc/harness.hpp"
#include "colloc/nuts.hpp"
#include "colloc/odesolve.hpp"
#include "colloc/quadrature.hpp"

namespace colloc {

namespace {

struct Synthetic {
  Eigen::VectorXd theta, x0, sigma;
  double t_end;
  int n_obs, num_basis, m, k;
  double lambda;
};

Synthetic synthetic_setup(const std::string& model) {
  if (model == "fn") {
    return {(Eigen::VectorXd(3) << 0.2, 0.2, 3.0).finished(), (Eigen::VectorXd(2) << -1.0, 1.0).finished(),
            (Eigen::VectorXd(2) << 0.2, 0.2).finished(), 20.0, 41, 83, 200, 5, 1e3};
  }
  if (model == "lv") {
    return {(Eigen::VectorXd(4) << 0.72, 0.028, 0.496, 0.013).finished(),
            (Eigen::VectorXd(2) << 24.27, 12.22).finished(), (Eigen::VectorXd(2) << 2.0, 2.0).finished(), 20.0,
            21, 43, 100, 4, 10.0};
  }
  throw ConfigError("no synthetic setup for model '" + model + "'");
}

}  // namespace

ProblemPtr synthetic_problem(const std::string& model, PriorKind prior, std::uint64_t seed) {
  const Synthetic s = synthetic_setup(model);
  Scenario sc;
  sc.model = model;
  sc.theta = s.theta;
  sc.x0 = s.x0;
  sc.noise_sd = s.sigma;
  sc.times = uniform_grid(Interval{0.0, s.t_end}, s.n_obs);
  const Observations data = generate_data(sc, seed);
  FitSettings fs;
  fs.num_basis = s.num_basis;
  fs.quad_outer = s.m;
  fs.quad_inner = s.k;
  fs.prior = prior;
  return prepare_problem(ModelRegistry::instance().create(model), data, fs);
}

double synthetic_lambda(const std::string& model) { return synthetic_setup(model).lambda; }

PosteriorState reference_state(const Problem& problem, const std::string& model) {
  const Synthetic s = synthetic_setup(model);
  PosteriorState st;
  st.theta_u = unconstrain_params(problem.model(), s.theta);
  // Least-squares projection of the true trajectory, where the posterior
  // concentrates.
  const std::vector<double> grid = uniform_grid(problem.basis().domain(), 2001);
  SolveConfig tight;
  tight.rel_tol = tight.abs_tol = 1e-10;
  const Eigen::MatrixXd truth = solve(problem.model(), s.theta, s.x0, grid, tight);
  st.coeffs = smooth_data(problem.basis(), grid, truth, 0.0);
  st.log_sigma = s.sigma.array().log();
  return st;
}

double gradient_check(const PosteriorSpec& spec, const PosteriorState& center, int states, std::uint64_t seed) {
  const Problem& pb = spec.problem();
  const Eigen::VectorXd c0 = pack(center);
  const auto n = static_cast<std::size_t>(c0.size());
  const double coeff_scale = std::max(1e-3, center.coeffs.cwiseAbs().maxCoeff());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  Eigen::VectorXd grad(c0.size()), q(c0.size());
  for (int s = 0; s < states; ++s) {
    q = c0;
    const Eigen::Index n_p = pb.num_params(), n_c = pb.num_states() * pb.num_basis();
    for (Eigen::Index k = 0; k < n_p; ++k) q[k] += 0.02 * nd(rng);
    for (Eigen::Index k = n_p; k < n_p + n_c; ++k) q[k] += 0.005 * coeff_scale * nd(rng);
    for (Eigen::Index k = n_p + n_c; k < q.size(); ++k) q[k] += 0.1 * nd(rng);
    log_posterior_flat(spec, std::span<const double>(q.data(), n), std::span<double>(grad.data(), n));
    for (Eigen::Index k = 0; k < q.size(); ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(q[k]));
      Eigen::VectorXd qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      const double fp = log_posterior_flat(spec, std::span<const double>(qp.data(), n), {});
      const double fm = log_posterior_flat(spec, std::span<const double>(qm.data(), n), {});
      const double fd = (fp - fm) / (qp[k] - qm[k]);
      if (std::abs(fd) < 1e-8 && std::abs(grad[k]) < 1e-8) continue;
      worst = std::max(worst, std::abs(grad[k] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

std::vector<CheckResult> run_property_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  auto add = [&](std::string name, double value, double tol) {
    out.push_back({std::move(name), value, tol, value < tol});
  };

  for (const auto& name : ModelRegistry::instance().names()) {
    const ModelPtr m = ModelRegistry::instance().create(name);
    double err = 0.0;
    try {
      err = check_jacobians(*m, 100, seed).max_rel_error();
    } catch (const ValidationError&) {
      err = std::numeric_limits<double>::infinity();
    }
    add("jacobian " + name, err, 1e-5);
  }

  for (const std::string model : {"fn", "lv"}) {
    for (PriorKind kind : {PriorKind::integral, PriorKind::derivative}) {
      const ProblemPtr pb = synthetic_problem(model, kind, seed);
      const PosteriorSpec spec(pb, synthetic_lambda(model));
      add("gradient " + model + " " + to_string(kind), gradient_check(spec, reference_state(*pb, model), 50, seed),
          1e-5);
    }
  }

  {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int n = 1; n <= 20; ++n) {
      const double a = 0.1 + 2.0 * u(rng);
      const double b = a + 0.5 + 2.5 * u(rng);
      const GaussRule rule = gauss_legendre(n, Interval{a, b});
      for (int d = 0; d <= 2 * n - 1; ++d) {
        double sum = 0.0;
        for (int k = 0; k < n; ++k) {
          sum += rule.weights[static_cast<std::size_t>(k)] * std::pow(rule.nodes[static_cast<std::size_t>(k)], d);
        }
        const double exact = (std::pow(b, d + 1) - std::pow(a, d + 1)) / (d + 1);
        worst = std::max(worst, std::abs(sum - exact) / std::abs(exact));
      }
    }
    add("quadrature exactness", worst, 1e-10);
  }

  {
    const BasisSpec spec = make_basis(4, 83, Interval{0.0, 20.0});
    const BasisMatrix bm = eval_basis(spec, uniform_grid(spec.domain(), 1000));
    add("partition of unity", (bm.values.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  }

  {
    const ModelPtr lin = linear_model(1);
    SolveConfig cfg;
    cfg.rel_tol = cfg.abs_tol = 1e-10;
    const Eigen::MatrixXd x = solve(*lin, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), {0.0, 1.0}, cfg);
    add("solver exponential", std::abs(x(1, 0) - std::exp(1.0)) / std::exp(1.0), 1e-8);
  }

  {
    // 10-dim standard normal: worst mean z-score over 4 MC SE and worst
    // relative variance error over 15%.
    const int dim = 10;
    LogDensity target = [](std::span<const double> q, std::span<double> g) {
      double v = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k) {
        v -= 0.5 * q[k] * q[k];
        if (!g.empty()) g[k] = -q[k];
      }
      return v;
    };
    NutsConfig cfg;
    cfg.num_warmup = 1000;
    cfg.num_iterations = 3000;
    cfg.seed = seed;
    const Chain chain = sample(target, Eigen::VectorXd::Zero(dim), cfg);
    double z = 0.0, var_err = 0.0;
    for (int k = 0; k < dim; ++k) {
      const Eigen::VectorXd col = chain.draws.col(k);
      const double mean = col.mean();
      const double var = (col.array() - mean).square().sum() / static_cast<double>(col.size() - 1);
      // Effective sample size from the initial positive autocorrelations.
      double rho_sum = 0.0;
      for (int lag = 1; lag < 200; ++lag) {
        double acf = 0.0;
        for (Eigen::Index t = 0; t + lag < col.size(); ++t) acf += (col[t] - mean) * (col[t + lag] - mean);
        acf /= static_cast<double>(col.size()) * var;
        if (acf < 0.0) break;
        rho_sum += acf;
      }
      const double ess = static_cast<double>(col.size()) / (1.0 + 2.0 * rho_sum);
      z = std::max(z, std::abs(mean) / std::sqrt(var / ess));
      var_err = std::max(var_err, std::abs(var - 1.0));
    }
    add("nuts gaussian mean (z / 4)", z / 4.0, 1.0);
    add("nuts gaussian variance", var_err, 0.15);
  }
  return out;
}

}  // namespace colloc
