#include "colloc/lambda_select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "colloc/errors.hpp"

namespace colloc {

void LambdaConfig::validate() const {
  if (!(lambda0 > 0.0)) throw ConfigError("lambda: lambda0 must be positive");
  if (!(lambda0 <= lambda_star && lambda_star <= lambda_max)) {
    throw ConfigError("lambda: need lambda0 <= lambda_star <= lambda_max");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("lambda: alpha must be in (0, 1)");
  if (!(multiplier > 1.0)) throw ConfigError("lambda: multiplier must exceed 1");
}

double LambdaConfig::ladder(int p) const { return lambda0 * std::pow(multiplier, p); }

int LambdaConfig::max_steps() const {
  return static_cast<int>(std::floor(std::log(lambda_max / lambda0) / std::log(multiplier) + 1e-9)) + 1;
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::interval_overlap: return "interval-overlap";
    case StopReason::err_increase: return "err-increase";
    case StopReason::cap_reached: return "cap-reached";
  }
  return "unknown";
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k) {
  // splitmix64 finalizer over base + k * golden ratio increment.
  std::uint64_t z = base + (k + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

LogDensity make_log_density(const PosteriorSpec& spec) {
  return [spec](std::span<const double> q, std::span<double> grad) { return log_posterior_flat(spec, q, grad); };
}

FitResult summarize_fit(const PosteriorSpec& spec, Chain chain, double level) {
  const Problem& pb = spec.problem();
  const int n_p = pb.num_params(), n_i = pb.num_states(), l = pb.num_basis();
  std::vector<CoordTransform> tr(static_cast<std::size_t>(pb.dim()), CoordTransform::identity);
  const auto pos = pb.model().param_positive();
  for (int p = 0; p < n_p; ++p) {
    if (pos[static_cast<std::size_t>(p)]) tr[static_cast<std::size_t>(p)] = CoordTransform::exp;
  }
  for (int i = 0; i < n_i; ++i) tr[static_cast<std::size_t>(n_p + n_i * l + i)] = CoordTransform::exp;
  const ChainSummary s = summarize(chain, tr, level);

  FitResult fit;
  fit.lambda = spec.lambda();
  fit.theta_mean = s.mean.head(n_p);
  fit.theta_lower = s.lower.head(n_p);
  fit.theta_upper = s.upper.head(n_p);
  fit.sigma_mean = s.mean.tail(n_i);
  fit.sigma_lower = s.lower.tail(n_i);
  fit.sigma_upper = s.upper.tail(n_i);
  fit.coeff_mean.resize(n_i, l);
  for (int i = 0; i < n_i; ++i) fit.coeff_mean.row(i) = s.mean.segment(n_p + i * l, l).transpose();

  const BasisMatrix& b0 = pb.plan().basis_at_zero;
  fit.x0_mean.resize(n_i);
  fit.x0_lower.resize(n_i);
  fit.x0_upper.resize(n_i);
  std::vector<double> vals(static_cast<std::size_t>(chain.draws.rows()));
  Eigen::VectorXd row;
  for (int i = 0; i < n_i; ++i) {
    for (Eigen::Index r = 0; r < chain.draws.rows(); ++r) {
      row = chain.draws.row(r).transpose();
      vals[static_cast<std::size_t>(r)] = b0.value(0, row.data() + n_p + i * l);
    }
    fit.x0_mean[i] = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    fit.x0_lower[i] = quantile(vals, 0.5 * (1.0 - level));
    fit.x0_upper[i] = quantile(vals, 0.5 * (1.0 + level));
  }
  fit.chain = std::move(chain);
  return fit;
}

double discrepancy_err(const PosteriorSpec& spec, const Eigen::VectorXd& theta_hat,
                       const SplineCoefficients& coeff_hat) {
  const Problem& pb = spec.problem();
  const OdeModel& model = pb.model();
  const BasisSpec& basis = pb.basis();
  const Observations& data = pb.data();
  const int n_i = pb.num_states();
  const double t1 = basis.domain().lo;
  const double t_end = basis.domain().hi;
  std::vector<double> x(static_cast<std::size_t>(n_i)), f(static_cast<std::size_t>(n_i));
  const std::span<const double> th(theta_hat.data(), static_cast<std::size_t>(theta_hat.size()));

  // Integral of f along the spline from t1 to t, all components.
  auto integrate = [&](double t) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_i);
    const GaussRule rule = integration_rule(basis, Interval{t1, t}, pb.plan().inner_size, pb.plan().scheme);
    for (int k = 0; k < rule.size(); ++k) {
      const double s = rule.nodes[static_cast<std::size_t>(k)];
      const LocalBasis loc = eval_local(basis, s, 0);
      for (int i = 0; i < n_i; ++i) {
        double v = 0.0;
        for (int j = 0; j < basis.order(); ++j) v += loc.ders(0, j) * coeff_hat(i, loc.first + j);
        x[static_cast<std::size_t>(i)] = v;
      }
      model.rhs(x, th, s + pb.time_offset(), f);
      for (int i = 0; i < n_i; ++i) acc[i] += rule.weights[static_cast<std::size_t>(k)] * f[static_cast<std::size_t>(i)];
    }
    return acc;
  };
  auto spline_at = [&](double t, int i) {
    const LocalBasis loc = eval_local(basis, t, 0);
    double v = 0.0;
    for (int j = 0; j < basis.order(); ++j) v += loc.ders(0, j) * coeff_hat(i, loc.first + j);
    return v;
  };

  Eigen::VectorXd x0(n_i);
  for (int i = 0; i < n_i; ++i) x0[i] = spline_at(t1, i);
  double err = 0.0;
  for (int j = 0; j < data.num_times(); ++j) {
    const double tj = data.times[static_cast<std::size_t>(j)];
    bool any = false;
    for (int i = 0; i < n_i; ++i) any = any || !std::isnan(data.values(j, i));
    if (!any) continue;
    const Eigen::VectorXd q = integrate(tj);
    for (int i = 0; i < n_i; ++i) {
      const double y = data.values(j, i);
      if (std::isnan(y)) continue;
      const double r = y - q[i] - x0[i];
      err += r * r;
    }
  }
  const Eigen::VectorXd q_end = integrate(t_end);
  for (int i = 0; i < n_i; ++i) {
    const double r = spline_at(t_end, i) - q_end[i] - x0[i];
    err += r * r;
  }
  return err;
}

double overlap_ratio(Interval current, Interval previous) {
  const double width = current.length();
  if (!(width > 0.0)) throw DomainError("overlap_ratio: current interval has zero width");
  const double overlap = std::min(current.hi, previous.hi) - std::max(current.lo, previous.lo);
  return std::clamp(overlap / width, 0.0, 1.0);
}

namespace {

bool at_least(double a, double b) { return a >= b * (1.0 - 1e-9); }

LambdaStep make_step(const FitResult& fit, double err) {
  LambdaStep st;
  st.lambda = fit.lambda;
  st.theta_mean = fit.theta_mean;
  st.theta_lower = fit.theta_lower;
  st.theta_upper = fit.theta_upper;
  st.sigma_mean = fit.sigma_mean;
  st.coeff_mean = fit.coeff_mean;
  st.err = err;
  st.sampled = true;
  st.divergences = fit.chain.divergence_count;
  st.step_size = fit.chain.step_size;
  const auto& acc = fit.chain.accept_stats;
  st.mean_accept = acc.empty() ? 0.0 : std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  return st;
}

FitResult run_chain(const PosteriorSpec& spec, const PosteriorState& start, const NutsConfig& nuts) {
  const Eigen::VectorXd init = pack(start);
  try {
    Chain chain = sample(make_log_density(spec), init, nuts);
    return summarize_fit(spec, std::move(chain));
  } catch (const SamplerInitError& e) {
    throw SamplerInitError(std::string(e.what()) + " (lambda = " + std::to_string(spec.lambda()) + ")");
  }
}

}  // namespace

LambdaSelection select_lambda(const ProblemPtr& problem, const InitialEstimate& init, const LambdaConfig& config,
                              const NutsConfig& nuts, const StepCallback& on_step) {
  config.validate();
  nuts.validate();
  const OdeModel& model = problem->model();
  const int n_p = problem->num_params();

  LambdaTrace trace;
  {
    const PosteriorSpec spec0(problem, config.lambda0);
    LambdaStep st;
    st.lambda = config.lambda0;
    st.theta_mean = init.theta_hat;
    st.theta_lower = init.theta_lower;
    st.theta_upper = init.theta_upper;
    st.sigma_mean = init.state.log_sigma.array().exp();
    st.coeff_mean = init.state.coeffs;
    st.err = discrepancy_err(spec0, init.theta_hat, init.state.coeffs);
    st.sampled = false;
    trace.steps.push_back(st);
    if (on_step) on_step(st);
  }

  std::optional<FitResult> previous_fit;
  for (int p = 1;; ++p) {
    const double lambda = config.ladder(p);
    const PosteriorSpec spec(problem, lambda);
    const LambdaStep& prev = trace.steps.back();

    PosteriorState start;
    start.theta_u = unconstrain_params(model, prev.theta_mean);
    start.coeffs = init.state.coeffs;
    start.log_sigma = prev.sigma_mean.array().log();
    NutsConfig step_nuts = nuts;
    step_nuts.seed = derive_seed(nuts.seed, static_cast<std::uint64_t>(p));
    FitResult fit = run_chain(spec, start, step_nuts);

    LambdaStep st = make_step(fit, discrepancy_err(spec, fit.theta_mean, fit.coeff_mean));
    const bool checking = at_least(lambda, config.lambda_star);
    if (checking && st.err <= prev.err) {
      bool stable = true;
      for (int k = 0; k < n_p; ++k) {
        double ratio = 0.0;
        try {
          ratio = overlap_ratio(Interval{st.theta_lower[k], st.theta_upper[k]},
                                Interval{prev.theta_lower[k], prev.theta_upper[k]});
        } catch (const DomainError&) {
          ratio = 0.0;
        }
        st.overlap.push_back(ratio);
        stable = stable && ratio > 1.0 - config.alpha;
      }
      trace.steps.push_back(st);
      if (on_step) on_step(st);
      if (stable) {
        trace.selected = lambda;
        trace.selected_index = static_cast<int>(trace.steps.size()) - 1;
        trace.stop_reason = StopReason::interval_overlap;
        return {std::move(trace), std::move(fit)};
      }
    } else if (checking) {
      trace.steps.push_back(st);
      if (on_step) on_step(st);
      trace.selected_index = static_cast<int>(trace.steps.size()) - 2;
      trace.selected = trace.steps[static_cast<std::size_t>(trace.selected_index)].lambda;
      trace.stop_reason = StopReason::err_increase;
      if (!previous_fit) {
        // The predecessor is the initial estimate; sample its full posterior.
        const PosteriorSpec spec0(problem, config.lambda0);
        NutsConfig nuts0 = nuts;
        nuts0.seed = derive_seed(nuts.seed, 0);
        previous_fit = run_chain(spec0, init.state, nuts0);
      }
      return {std::move(trace), std::move(*previous_fit)};
    } else {
      trace.steps.push_back(st);
      if (on_step) on_step(st);
    }
    if (at_least(lambda, config.lambda_max) || p >= config.max_steps()) {
      trace.selected = lambda;
      trace.selected_index = static_cast<int>(trace.steps.size()) - 1;
      trace.stop_reason = StopReason::cap_reached;
      return {std::move(trace), std::move(fit)};
    }
    previous_fit = std::move(fit);
  }
}

}  // namespace colloc
