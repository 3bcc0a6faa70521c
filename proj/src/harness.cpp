#include "colloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

#include "colloc/basis.hpp"
#include "colloc/errors.hpp"

namespace colloc {

void FitSettings::validate() const {
  if (order < 2) throw ConfigError("basis.order must be at least 2");
  if (num_basis < order) throw ConfigError("basis.L must be at least basis.order");
  if (quad_outer < 0 || quad_inner < 0) throw ConfigError("quadrature sizes must be positive or auto");
  if (!(init_penalty >= 0.0)) throw ConfigError("init.penalty must be nonnegative");
  if (!(init_sigma > 0.0)) throw ConfigError("init.sigma must be positive");
  if (domain && !(domain->hi > domain->lo)) throw ConfigError("domain must have positive length");
  lambda.validate();
  nuts.validate();
  init_nuts.validate();
}

ProblemPtr prepare_problem(ModelPtr model, const Observations& data, const FitSettings& settings) {
  settings.validate();
  if (data.num_components() != model->dim_state()) {
    throw DimensionError("data has " + std::to_string(data.num_components()) + " components, model " +
                         model->name() + " has " + std::to_string(model->dim_state()));
  }
  if (data.num_times() < 2) throw DimensionError("need at least two observation times");
  const Interval dom = settings.domain.value_or(Interval{data.times.front(), data.times.back()});
  for (double t : data.times) {
    if (!dom.contains(t)) throw DomainError("observation time " + std::to_string(t) + " outside the fit domain");
  }
  Observations shifted = data;
  for (double& t : shifted.times) t -= dom.lo;
  // Guard against rounding past the shifted right end.
  const double len = dom.hi - dom.lo;
  for (double& t : shifted.times) t = std::clamp(t, 0.0, len);

  BasisSpec basis = make_basis(settings.order, settings.num_basis, Interval{0.0, len});
  const QuadratureSizes auto_sizes = default_quadrature_sizes(basis, model->poly_degree());
  const int m = settings.quad_outer > 0 ? settings.quad_outer : auto_sizes.outer;
  const int k = settings.quad_inner > 0 ? settings.quad_inner : auto_sizes.inner;
  QuadraturePlan plan = build_plan(basis, m, k, settings.inner_scheme);
  return make_problem(std::move(model), std::move(basis), std::move(plan), std::move(shifted), settings.prior,
                      dom.lo);
}

InitialEstimate initialize(const ProblemPtr& problem, const FitSettings& settings) {
  const Problem& pb = *problem;
  const OdeModel& model = pb.model();
  const int n_p = pb.num_params();

  InitialEstimate init;
  init.state.coeffs = smooth_data(pb.basis(), pb.data().times, pb.data().values, settings.init_penalty);
  init.state.log_sigma = Eigen::VectorXd::Constant(pb.num_states(), std::log(settings.init_sigma));
  init.state.theta_u = Eigen::VectorXd::Zero(n_p);

  const PosteriorSpec spec(problem, settings.lambda.lambda0);
  const auto positive = model.param_positive();
  Eigen::VectorXd full = pack(init.state);
  // theta-only target: the c-prior at lambda0 plus the log-transform term.
  LogDensity target = [spec, positive, full, n_p](std::span<const double> q, std::span<double> grad) mutable {
    std::copy(q.begin(), q.end(), full.data());
    Eigen::VectorXd g;
    std::span<double> gs;
    if (!grad.empty()) {
      g.resize(full.size());
      gs = std::span<double>(g.data(), static_cast<std::size_t>(g.size()));
    }
    double v = log_prior_flat(spec, spec.problem().prior_kind(),
                              std::span<const double>(full.data(), static_cast<std::size_t>(full.size())), gs);
    for (int p = 0; p < n_p; ++p) {
      if (!positive[static_cast<std::size_t>(p)]) continue;
      v += q[static_cast<std::size_t>(p)];
      if (!grad.empty()) g[p] += 1.0;
    }
    if (!grad.empty()) std::copy(g.data(), g.data() + n_p, grad.begin());
    return v;
  };

  // A target that ignores theta leaves the chain nothing to learn.
  {
    std::mt19937_64 rng(settings.init_nuts.seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n_p), g(n_p);
    const double v0 = target(std::span<const double>(q.data(), static_cast<std::size_t>(n_p)),
                             std::span<double>(g.data(), static_cast<std::size_t>(n_p)));
    for (int p = 0; p < n_p; ++p) {
      if (positive[static_cast<std::size_t>(p)]) g[p] -= 1.0;
    }
    bool flat = n_p == 0 || g.cwiseAbs().maxCoeff() < 1e-12;
    for (int trial = 0; trial < 3 && flat; ++trial) {
      for (int p = 0; p < n_p; ++p) q[p] = nd(rng);
      const double v = target(std::span<const double>(q.data(), static_cast<std::size_t>(n_p)),
                              std::span<double>(g.data(), static_cast<std::size_t>(n_p)));
      // The log-transform term alone is not information about theta.
      Eigen::VectorXd g_prior = g;
      double v_prior = v;
      for (int p = 0; p < n_p; ++p) {
        if (positive[static_cast<std::size_t>(p)]) {
          g_prior[p] -= 1.0;
          v_prior -= q[p];
        }
      }
      flat = g_prior.cwiseAbs().maxCoeff() < 1e-12 && std::abs(v_prior - v0) <= 1e-12 * (1.0 + std::abs(v0));
    }
    if (n_p == 0) flat = true;
    init.flat_target = flat;
  }

  if (init.flat_target) {
    init.theta_hat = constrain_params(model, init.state.theta_u);
    init.theta_lower = init.theta_hat;
    init.theta_upper = init.theta_hat;
    return init;
  }

  Chain chain = sample(target, init.state.theta_u, settings.init_nuts);
  std::vector<CoordTransform> tr(static_cast<std::size_t>(n_p), CoordTransform::identity);
  for (int p = 0; p < n_p; ++p) {
    if (positive[static_cast<std::size_t>(p)]) tr[static_cast<std::size_t>(p)] = CoordTransform::exp;
  }
  const ChainSummary s = summarize(chain, tr);
  init.theta_hat = s.mean;
  init.theta_lower = s.lower;
  init.theta_upper = s.upper;
  init.state.theta_u = unconstrain_params(model, init.theta_hat);
  return init;
}

void Scenario::validate() const {
  if (!ModelRegistry::instance().contains(model)) throw ConfigError("unknown model '" + model + "'");
  const ModelPtr m = ModelRegistry::instance().create(model);
  if (theta.size() != m->dim_params()) throw ConfigError("simulation.theta has the wrong length");
  if (x0.size() != m->dim_state()) throw ConfigError("simulation.x0 has the wrong length");
  if (noise_sd.size() != m->dim_state()) throw ConfigError("simulation.sigma has the wrong length");
  if ((noise_sd.array() < 0.0).any()) throw ConfigError("simulation.sigma must be nonnegative");
  if (times.size() < 2) throw ConfigError("simulation needs at least two times");
  if (!std::is_sorted(times.begin(), times.end()) ||
      std::adjacent_find(times.begin(), times.end()) != times.end()) {
    throw ConfigError("simulation times must be strictly increasing");
  }
  if (!component_times.empty() && component_times.size() != static_cast<std::size_t>(m->dim_state())) {
    throw ConfigError("simulation.component_times needs one list per component");
  }
  for (const auto& ct : component_times) {
    for (double t : ct) {
      if (!std::binary_search(times.begin(), times.end(), t)) {
        throw ConfigError("component time " + std::to_string(t) + " is not in simulation.times");
      }
    }
  }
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (rmse_grid < 100) throw ConfigError("rmse_grid must be at least 100");
  fit.validate();
}

Observations generate_data(const Scenario& scenario, std::uint64_t data_seed) {
  const ModelPtr model = ModelRegistry::instance().create(scenario.model);
  SolveConfig tight;
  tight.rel_tol = 1e-10;
  tight.abs_tol = 1e-10;
  const Eigen::MatrixXd truth = solve(*model, scenario.theta, scenario.x0, scenario.times, tight);

  Observations data;
  data.times = scenario.times;
  data.names = model->state_names();
  data.values = truth;
  std::mt19937_64 rng(data_seed);
  std::normal_distribution<double> nd;
  for (Eigen::Index j = 0; j < data.values.rows(); ++j) {
    for (Eigen::Index i = 0; i < data.values.cols(); ++i) data.values(j, i) += scenario.noise_sd[i] * nd(rng);
  }
  if (!scenario.component_times.empty()) {
    for (Eigen::Index i = 0; i < data.values.cols(); ++i) {
      const auto& ct = scenario.component_times[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < data.values.rows(); ++j) {
        const double t = data.times[static_cast<std::size_t>(j)];
        if (std::find(ct.begin(), ct.end(), t) == ct.end()) data.values(j, i) = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return data;
}

namespace {

// Per-replication seed streams.
enum SeedStream : std::uint64_t { kData = 0, kInit = 1, kChain = 2 };

}  // namespace

ReplicationResult run_replication(const Scenario& scenario, int index) {
  ReplicationResult rep;
  rep.index = index;
  rep.seed = derive_seed(scenario.seed, static_cast<std::uint64_t>(index));
  const auto start = std::chrono::steady_clock::now();
  try {
    const ModelPtr model = ModelRegistry::instance().create(scenario.model);
    const Observations data = generate_data(scenario, derive_seed(rep.seed, kData));
    FitSettings settings = scenario.fit;
    settings.init_nuts.seed = derive_seed(rep.seed, kInit);
    settings.nuts.seed = derive_seed(rep.seed, kChain);

    const ProblemPtr problem = prepare_problem(model, data, settings);
    const InitialEstimate init = initialize(problem, settings);
    LambdaSelection sel = select_lambda(problem, init, settings.lambda, settings.nuts);

    const FitResult& fit = sel.fit;
    rep.theta_hat = fit.theta_mean;
    rep.theta_lower = fit.theta_lower;
    rep.theta_upper = fit.theta_upper;
    rep.sigma_hat = fit.sigma_mean;
    rep.x0_hat = fit.x0_mean;
    rep.lambda_hat = sel.trace.selected;
    rep.stop_reason = sel.trace.stop_reason;
    rep.err_initial = sel.trace.steps.front().err;
    rep.err_selected = sel.trace.steps[static_cast<std::size_t>(sel.trace.selected_index)].err;
    rep.divergences = fit.chain.divergence_count;

    const Interval span{scenario.times.front(), scenario.times.back()};
    rep.rmse = trajectory_rmse(*model, rep.theta_hat, rep.x0_hat, scenario.theta, scenario.x0, span,
                               scenario.rmse_grid);
    rep.rmse_true_x0 = trajectory_rmse(*model, rep.theta_hat, scenario.x0, scenario.theta, scenario.x0, span,
                                       scenario.rmse_grid);
    rep.component_norm = Eigen::VectorXd::Constant(model->dim_state(), std::numeric_limits<double>::infinity());
    if (!rep.rmse.diverged) {
      try {
        const Eigen::MatrixXd traj = solve(*model, rep.theta_hat, rep.x0_hat, uniform_grid(span, scenario.rmse_grid));
        rep.component_norm = (traj.array().square().colwise().mean()).sqrt().transpose();
      } catch (const SolverStepLimitError&) {
      }
    }
    rep.trace = std::move(sel.trace);
    rep.ok = true;
  } catch (const std::exception& e) {
    rep.ok = false;
    rep.error = e.what();
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

Spread median_iqr(std::vector<double> values) {
  if (values.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  Spread s;
  s.median = quantile(values, 0.5);
  s.iqr = quantile(values, 0.75) - quantile(values, 0.25);
  return s;
}

StudyAggregates aggregate(const Scenario& scenario, const std::vector<ReplicationResult>& reps) {
  StudyAggregates agg;
  const Eigen::Index n_p = scenario.theta.size();
  const Eigen::Index n_i = scenario.x0.size();
  agg.theta_mean = Eigen::VectorXd::Zero(n_p);
  agg.theta_rmse = Eigen::VectorXd::Zero(n_p);
  agg.sigma_mean = Eigen::VectorXd::Zero(n_i);
  agg.component_norm_mean = Eigen::VectorXd::Zero(n_i);
  std::vector<std::vector<double>> comp(static_cast<std::size_t>(n_i)), comp_true(static_cast<std::size_t>(n_i));
  std::vector<double> total, total_true;
  int norm_count = 0;
  for (const auto& r : reps) {
    if (!r.ok) {
      ++agg.failed;
      continue;
    }
    ++agg.succeeded;
    agg.theta_mean += r.theta_hat;
    agg.theta_rmse += (r.theta_hat - scenario.theta).array().square().matrix();
    agg.sigma_mean += r.sigma_hat;
    if (r.rmse.diverged) ++agg.diverged;
    if (r.component_norm.allFinite()) {
      agg.component_norm_mean += r.component_norm;
      ++norm_count;
    }
    for (Eigen::Index i = 0; i < n_i; ++i) {
      comp[static_cast<std::size_t>(i)].push_back(r.rmse.per_component[i]);
      comp_true[static_cast<std::size_t>(i)].push_back(r.rmse_true_x0.per_component[i]);
    }
    total.push_back(r.rmse.total);
    total_true.push_back(r.rmse_true_x0.total);
  }
  if (agg.succeeded > 0) {
    agg.theta_mean /= agg.succeeded;
    agg.theta_rmse = (agg.theta_rmse / agg.succeeded).cwiseSqrt();
    agg.sigma_mean /= agg.succeeded;
  } else {
    agg.theta_mean.setConstant(std::numeric_limits<double>::quiet_NaN());
    agg.theta_rmse.setConstant(std::numeric_limits<double>::quiet_NaN());
    agg.sigma_mean.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  if (norm_count > 0) {
    agg.component_norm_mean /= norm_count;
  } else {
    agg.component_norm_mean.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  for (Eigen::Index i = 0; i < n_i; ++i) {
    agg.rmse_component.push_back(median_iqr(comp[static_cast<std::size_t>(i)]));
    agg.rmse_true_x0_component.push_back(median_iqr(comp_true[static_cast<std::size_t>(i)]));
  }
  agg.rmse_total = median_iqr(total);
  agg.rmse_true_x0_total = median_iqr(total_true);
  return agg;
}

StudyResult run_study(const Scenario& scenario, int threads, const ReplicationCallback& on_done) {
  scenario.validate();
  const int n = scenario.replications;
  int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, n);

  StudyResult result;
  result.replications.resize(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::mutex mu;
  auto work = [&] {
    for (int k = next++; k < n; k = next++) {
      ReplicationResult r = run_replication(scenario, k);
      std::lock_guard<std::mutex> lock(mu);
      if (on_done) on_done(r);
      result.replications[static_cast<std::size_t>(k)] = std::move(r);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  result.aggregates = aggregate(scenario, result.replications);
  return result;
}

TrajectoryBands spline_bands(const Problem& problem, const Chain& chain, int n_grid, double level) {
  if (n_grid < 2) throw DimensionError("band grid needs at least two points");
  const BasisSpec& basis = problem.basis();
  const std::vector<double> grid = uniform_grid(basis.domain(), n_grid);
  const BasisMatrix phi = eval_basis(basis, grid);
  const int n_p = problem.num_params(), n_i = problem.num_states(), l = problem.num_basis();
  const Eigen::Index n_draws = chain.draws.rows();

  TrajectoryBands bands;
  bands.times = grid;
  for (double& t : bands.times) t += problem.time_offset();
  bands.mean.resize(n_grid, n_i);
  bands.lower.resize(n_grid, n_i);
  bands.upper.resize(n_grid, n_i);
  // Row-major copy so each draw's coefficients are contiguous.
  const RowMatrix draws = chain.draws;
  std::vector<double> vals(static_cast<std::size_t>(n_draws));
  for (int i = 0; i < n_i; ++i) {
    for (int g = 0; g < n_grid; ++g) {
      double sum = 0.0;
      for (Eigen::Index r = 0; r < n_draws; ++r) {
        const double v = phi.value(g, draws.row(r).data() + n_p + i * l);
        vals[static_cast<std::size_t>(r)] = v;
        sum += v;
      }
      bands.mean(g, i) = sum / static_cast<double>(n_draws);
      bands.lower(g, i) = quantile(vals, 0.5 * (1.0 - level));
      bands.upper(g, i) = quantile(vals, 0.5 * (1.0 + level));
    }
  }
  return bands;
}

DatasetFit fit_dataset(ModelPtr model, const Observations& data, const FitSettings& settings,
                       const StepCallback& on_step, int band_grid) {
  DatasetFit out;
  out.problem = prepare_problem(std::move(model), data, settings);
  FitSettings s = settings;
  s.init_nuts.seed = derive_seed(settings.nuts.seed, 1000);
  out.init = initialize(out.problem, s);
  out.selection = select_lambda(out.problem, out.init, settings.lambda, settings.nuts, on_step);
  out.bands = spline_bands(*out.problem, out.selection.fit.chain, band_grid);
  return out;
}

}  // namespace colloc
