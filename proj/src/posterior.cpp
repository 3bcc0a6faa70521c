#include "colloc/posterior.hpp"

#include <cmath>

#include "colloc/errors.hpp"

namespace colloc {

int Observations::count_observed(int component) const {
  int n = 0;
  for (Eigen::Index j = 0; j < values.rows(); ++j) {
    if (!std::isnan(values(j, component))) ++n;
  }
  return n;
}

std::string to_string(PriorKind kind) { return kind == PriorKind::integral ? "integral" : "derivative"; }

PriorKind prior_kind_from_string(const std::string& s) {
  if (s == "integral") return PriorKind::integral;
  if (s == "derivative") return PriorKind::derivative;
  throw ConfigError("prior must be 'integral' or 'derivative', got '" + s + "'");
}

Problem::Problem(ModelPtr model, BasisSpec basis, QuadraturePlan plan, Observations data, PriorKind prior,
                 double time_offset)
    : model_(std::move(model)),
      basis_(std::move(basis)),
      plan_(std::move(plan)),
      data_(std::move(data)),
      prior_(prior),
      time_offset_(time_offset) {
  if (!model_) throw ConfigError("Problem: model is null");
  if (data_.num_components() != model_->dim_state()) {
    throw DimensionError("Problem: data has " + std::to_string(data_.num_components()) +
                         " components but the model has " + std::to_string(model_->dim_state()));
  }
  if (static_cast<Eigen::Index>(data_.times.size()) != data_.values.rows()) {
    throw DimensionError("Problem: observation rows and times differ in length");
  }
  for (double t : data_.times) {
    if (!basis_.domain().contains(t)) {
      throw DomainError("Problem: observation time " + std::to_string(t) + " outside the basis domain");
    }
  }
  if (plan_.basis_at_outer.values.cols() != basis_.num_basis()) {
    throw DimensionError("Problem: quadrature plan was built for a different basis");
  }
  for (int i = 0; i < data_.num_components(); ++i) {
    std::vector<double> ts;
    std::vector<double> ys;
    for (int j = 0; j < data_.num_times(); ++j) {
      const double y = data_.values(j, i);
      if (std::isnan(y)) continue;
      ts.push_back(data_.times[static_cast<std::size_t>(j)]);
      ys.push_back(y);
    }
    obs_basis_.push_back(eval_basis(basis_, ts));
    obs_values_.push_back(Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size())));
  }
}

ProblemPtr make_problem(ModelPtr model, BasisSpec basis, QuadraturePlan plan, Observations data,
                        PriorKind prior, double time_offset) {
  return std::make_shared<const Problem>(std::move(model), std::move(basis), std::move(plan), std::move(data),
                                         prior, time_offset);
}

PosteriorSpec::PosteriorSpec(ProblemPtr problem, double lambda) : problem_(std::move(problem)), lambda_(lambda) {
  if (!problem_) throw ConfigError("PosteriorSpec: problem is null");
  if (!(lambda_ > 0.0) || !std::isfinite(lambda_)) throw DomainError("PosteriorSpec: lambda must be positive");
}

Eigen::VectorXd pack(const PosteriorState& s) {
  const Eigen::Index p = s.theta_u.size(), n_i = s.coeffs.rows(), l = s.coeffs.cols();
  Eigen::VectorXd flat(p + n_i * l + n_i);
  flat.head(p) = s.theta_u;
  for (Eigen::Index i = 0; i < n_i; ++i) flat.segment(p + i * l, l) = s.coeffs.row(i).transpose();
  flat.tail(n_i) = s.log_sigma;
  return flat;
}

PosteriorState unpack(const Problem& problem, std::span<const double> flat) {
  if (static_cast<int>(flat.size()) != problem.dim()) throw DimensionError("unpack: flat state has the wrong length");
  const int p = problem.num_params(), n_i = problem.num_states(), l = problem.num_basis();
  PosteriorState s;
  s.theta_u = Eigen::Map<const Eigen::VectorXd>(flat.data(), p);
  s.coeffs.resize(n_i, l);
  for (int i = 0; i < n_i; ++i) {
    s.coeffs.row(i) = Eigen::Map<const Eigen::RowVectorXd>(flat.data() + p + i * l, l);
  }
  s.log_sigma = Eigen::Map<const Eigen::VectorXd>(flat.data() + p + n_i * l, n_i);
  return s;
}

Eigen::VectorXd constrain_params(const OdeModel& model, const Eigen::VectorXd& theta_u) {
  const auto pos = model.param_positive();
  Eigen::VectorXd th = theta_u;
  for (Eigen::Index p = 0; p < th.size(); ++p) {
    if (pos[static_cast<std::size_t>(p)]) th[p] = std::exp(theta_u[p]);
  }
  return th;
}

Eigen::VectorXd unconstrain_params(const OdeModel& model, const Eigen::VectorXd& theta) {
  const auto pos = model.param_positive();
  Eigen::VectorXd u = theta;
  for (Eigen::Index p = 0; p < u.size(); ++p) {
    if (pos[static_cast<std::size_t>(p)]) {
      if (!(theta[p] > 0.0)) throw DomainError("unconstrain_params: positive parameter is not positive");
      u[p] = std::log(theta[p]);
    }
  }
  return u;
}

namespace {

struct Terms {
  double likelihood = 0.0;
  double prior = 0.0;
  double jacobian = 0.0;
};

enum Parts : unsigned {
  kLikelihood = 1u,
  kPrior = 2u,
  kJacobian = 4u,
  kAll = 7u,
};

// Scratch buffers reused across calls on the same thread.
struct Workspace {
  std::vector<double> theta, grad_theta, x, f, node_f, node_jx, node_jt;
  std::vector<double> span_int, prefix, resid, span_weight;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

// Evaluates x(s) for the row-th node of a basis matrix into x.
inline void spline_state(const BasisMatrix& bm, int row, const double* coeffs, int n_i, int l, double* x) {
  for (int i = 0; i < n_i; ++i) x[i] = bm.value(row, coeffs + i * l);
}

double integral_prior(const Problem& pb, double lambda, const double* theta, const double* coeffs,
                      double* grad_c, double* grad_theta, Workspace& ws) {
  const OdeModel& model = pb.model();
  const QuadraturePlan& plan = pb.plan();
  const int n_i = pb.num_states(), n_p = pb.num_params(), l = pb.num_basis();
  const int k_in = plan.inner_size;
  const int n_outer = plan.outer_size();
  const int n_spans = static_cast<int>(plan.span_rules.size());
  const int n_span_nodes = n_spans * k_in;
  const int n_inner_nodes = n_outer * k_in;
  const int n_nodes = n_span_nodes + n_inner_nodes;
  const bool want_grad = grad_c != nullptr;
  const double offset = pb.time_offset();
  const std::span<const double> th(theta, static_cast<std::size_t>(n_p));

  ws.x.resize(static_cast<std::size_t>(n_i));
  ws.node_f.resize(static_cast<std::size_t>(n_nodes * n_i));
  if (want_grad) {
    ws.node_jx.resize(static_cast<std::size_t>(n_nodes * n_i * n_i));
    ws.node_jt.resize(static_cast<std::size_t>(n_nodes * n_i * n_p));
  }
  auto eval_node = [&](const BasisMatrix& bm, int row, int node) {
    spline_state(bm, row, coeffs, n_i, l, ws.x.data());
    const double t = bm.times[static_cast<std::size_t>(row)] + offset;
    const std::span<const double> xs(ws.x.data(), static_cast<std::size_t>(n_i));
    model.rhs(xs, th, t, std::span<double>(ws.node_f.data() + node * n_i, static_cast<std::size_t>(n_i)));
    if (want_grad) {
      model.jac_x(xs, th, t,
                  std::span<double>(ws.node_jx.data() + node * n_i * n_i, static_cast<std::size_t>(n_i * n_i)));
      model.jac_theta(xs, th, t,
                      std::span<double>(ws.node_jt.data() + node * n_i * n_p, static_cast<std::size_t>(n_i * n_p)));
    }
  };

  // Complete knot spans: integral of f over each span, then prefix sums.
  ws.prefix.assign(static_cast<std::size_t>((n_spans + 1) * n_i), 0.0);
  for (int s = 0; s < n_spans; ++s) {
    const auto& w = plan.span_rules[static_cast<std::size_t>(s)].weights;
    double* pre_next = ws.prefix.data() + (s + 1) * n_i;
    const double* pre = ws.prefix.data() + s * n_i;
    for (int i = 0; i < n_i; ++i) pre_next[i] = pre[i];
    for (int k = 0; k < k_in; ++k) {
      const int node = s * k_in + k;
      eval_node(plan.basis_at_spans, node, node);
      const double* f = ws.node_f.data() + node * n_i;
      for (int i = 0; i < n_i; ++i) pre_next[i] += w[static_cast<std::size_t>(k)] * f[i];
    }
  }

  // Residual r_mi = x_i(xi_m) - x_i(t1) - Q_mi.
  ws.resid.resize(static_cast<std::size_t>(n_outer * n_i));
  ws.f.resize(static_cast<std::size_t>(n_i));
  double* x0 = ws.f.data();
  for (int i = 0; i < n_i; ++i) x0[i] = plan.basis_at_zero.value(0, coeffs + i * l);
  double sum = 0.0;
  for (int m = 0; m < n_outer; ++m) {
    const auto& w = plan.inner[static_cast<std::size_t>(m)].weights;
    const int q = plan.inner_full_spans[static_cast<std::size_t>(m)];
    double* r = ws.resid.data() + m * n_i;
    for (int i = 0; i < n_i; ++i) r[i] = plan.basis_at_outer.value(m, coeffs + i * l) - x0[i] - ws.prefix[static_cast<std::size_t>(q * n_i + i)];
    for (int k = 0; k < k_in; ++k) {
      const int row = m * k_in + k;
      const int node = n_span_nodes + row;
      eval_node(plan.basis_at_inner, row, node);
      const double* f = ws.node_f.data() + node * n_i;
      for (int i = 0; i < n_i; ++i) r[i] -= w[static_cast<std::size_t>(k)] * f[i];
    }
    const double v = plan.outer.weights[static_cast<std::size_t>(m)];
    for (int i = 0; i < n_i; ++i) sum += v * r[i] * r[i];
  }
  const double value = -0.5 * lambda * sum;
  if (!want_grad) return value;

  // g_mi = d value / d r_mi; dr/dc picks up the outer and endpoint rows
  // directly and -dQ through every inner node.
  ws.span_weight.assign(static_cast<std::size_t>((n_spans + 1) * n_i), 0.0);
  for (int m = 0; m < n_outer; ++m) {
    const double v = plan.outer.weights[static_cast<std::size_t>(m)];
    const auto& w = plan.inner[static_cast<std::size_t>(m)].weights;
    const int q = plan.inner_full_spans[static_cast<std::size_t>(m)];
    double* r = ws.resid.data() + m * n_i;
    for (int i = 0; i < n_i; ++i) {
      const double g = -lambda * v * r[i];
      r[i] = g;
      plan.basis_at_outer.accumulate_value(m, g, grad_c + i * l);
      plan.basis_at_zero.accumulate_value(0, -g, grad_c + i * l);
      ws.span_weight[static_cast<std::size_t>(q * n_i + i)] += g;
    }
    for (int k = 0; k < k_in; ++k) {
      const int row = m * k_in + k;
      const int node = n_span_nodes + row;
      const double wk = w[static_cast<std::size_t>(k)];
      const double* jx = ws.node_jx.data() + node * n_i * n_i;
      const double* jt = ws.node_jt.data() + node * n_i * n_p;
      for (int j = 0; j < n_i; ++j) {
        double a = 0.0;
        for (int i = 0; i < n_i; ++i) a += r[i] * jx[i * n_i + j];
        plan.basis_at_inner.accumulate_value(row, -wk * a, grad_c + j * l);
      }
      for (int p = 0; p < n_p; ++p) {
        double a = 0.0;
        for (int i = 0; i < n_i; ++i) a += r[i] * jt[i * n_p + p];
        grad_theta[p] -= wk * a;
      }
    }
  }
  // Span s enters Q_m for every m with q_m > s: suffix sums of the weights.
  for (int s = n_spans - 1; s >= 0; --s) {
    for (int i = 0; i < n_i; ++i) {
      ws.span_weight[static_cast<std::size_t>(s * n_i + i)] += ws.span_weight[static_cast<std::size_t>((s + 1) * n_i + i)];
    }
  }
  for (int s = 0; s < n_spans; ++s) {
    const double* gs = ws.span_weight.data() + (s + 1) * n_i;
    const auto& w = plan.span_rules[static_cast<std::size_t>(s)].weights;
    for (int k = 0; k < k_in; ++k) {
      const int node = s * k_in + k;
      const double wk = w[static_cast<std::size_t>(k)];
      const double* jx = ws.node_jx.data() + node * n_i * n_i;
      const double* jt = ws.node_jt.data() + node * n_i * n_p;
      for (int j = 0; j < n_i; ++j) {
        double a = 0.0;
        for (int i = 0; i < n_i; ++i) a += gs[i] * jx[i * n_i + j];
        plan.basis_at_spans.accumulate_value(node, -wk * a, grad_c + j * l);
      }
      for (int p = 0; p < n_p; ++p) {
        double a = 0.0;
        for (int i = 0; i < n_i; ++i) a += gs[i] * jt[i * n_p + p];
        grad_theta[p] -= wk * a;
      }
    }
  }
  return value;
}

double derivative_prior(const Problem& pb, double lambda, const double* theta, const double* coeffs,
                        double* grad_c, double* grad_theta, Workspace& ws) {
  const OdeModel& model = pb.model();
  const QuadraturePlan& plan = pb.plan();
  const BasisMatrix& bm = plan.basis_at_outer;
  const int n_i = pb.num_states(), n_p = pb.num_params(), l = pb.num_basis();
  const bool want_grad = grad_c != nullptr;
  const std::span<const double> th(theta, static_cast<std::size_t>(n_p));
  ws.x.resize(static_cast<std::size_t>(n_i));
  ws.f.resize(static_cast<std::size_t>(n_i));
  ws.node_jx.resize(static_cast<std::size_t>(n_i * n_i));
  ws.node_jt.resize(static_cast<std::size_t>(n_i * n_p));
  ws.resid.resize(static_cast<std::size_t>(n_i));
  double sum = 0.0;
  for (int m = 0; m < plan.outer_size(); ++m) {
    spline_state(bm, m, coeffs, n_i, l, ws.x.data());
    const double t = bm.times[static_cast<std::size_t>(m)] + pb.time_offset();
    const std::span<const double> xs(ws.x.data(), static_cast<std::size_t>(n_i));
    model.rhs(xs, th, t, ws.f);
    const double v = plan.outer.weights[static_cast<std::size_t>(m)];
    for (int i = 0; i < n_i; ++i) {
      const double r = bm.derivative(m, coeffs + i * l) - ws.f[static_cast<std::size_t>(i)];
      ws.resid[static_cast<std::size_t>(i)] = -lambda * v * r;
      sum += v * r * r;
    }
    if (!want_grad) continue;
    model.jac_x(xs, th, t, ws.node_jx);
    model.jac_theta(xs, th, t, ws.node_jt);
    const double* g = ws.resid.data();
    for (int i = 0; i < n_i; ++i) bm.accumulate_derivative(m, g[i], grad_c + i * l);
    for (int j = 0; j < n_i; ++j) {
      double a = 0.0;
      for (int i = 0; i < n_i; ++i) a += g[i] * ws.node_jx[static_cast<std::size_t>(i * n_i + j)];
      bm.accumulate_value(m, -a, grad_c + j * l);
    }
    for (int p = 0; p < n_p; ++p) {
      double a = 0.0;
      for (int i = 0; i < n_i; ++i) a += g[i] * ws.node_jt[static_cast<std::size_t>(i * n_p + p)];
      grad_theta[p] -= a;
    }
  }
  return -0.5 * lambda * sum;
}

double likelihood(const Problem& pb, const double* coeffs, const double* log_sigma, double* grad_c,
                  double* grad_ls) {
  const int n_i = pb.num_states(), l = pb.num_basis();
  double total = 0.0;
  for (int i = 0; i < n_i; ++i) {
    const BasisMatrix& bm = pb.obs_basis(i);
    const Eigen::VectorXd& y = pb.obs_values(i);
    const double inv_var = std::exp(-2.0 * log_sigma[i]);
    const double* c = coeffs + i * l;
    double ss = 0.0;
    for (int j = 0; j < bm.rows(); ++j) {
      const double r = y[j] - bm.value(j, c);
      ss += r * r;
      if (grad_c != nullptr) bm.accumulate_value(j, r * inv_var, grad_c + i * l);
    }
    const int n_obs = bm.rows();
    total += -n_obs * log_sigma[i] - 0.5 * ss * inv_var;
    if (grad_ls != nullptr) grad_ls[i] += -n_obs + ss * inv_var;
  }
  return total;
}

// Shared evaluation over the flat layout. grad (if non-null) is overwritten.
Terms evaluate(const PosteriorSpec& spec, PriorKind kind, unsigned parts, const double* flat, double* grad) {
  const Problem& pb = spec.problem();
  const OdeModel& model = pb.model();
  const int n_p = pb.num_params(), n_i = pb.num_states(), l = pb.num_basis();
  const double* theta_u = flat;
  const double* coeffs = flat + n_p;
  const double* log_sigma = flat + n_p + n_i * l;
  Workspace& ws = workspace();
  const std::vector<bool> pos = model.param_positive();
  ws.theta.resize(static_cast<std::size_t>(n_p));
  for (int p = 0; p < n_p; ++p) {
    ws.theta[static_cast<std::size_t>(p)] = pos[static_cast<std::size_t>(p)] ? std::exp(theta_u[p]) : theta_u[p];
  }
  double* grad_c = nullptr;
  double* grad_ls = nullptr;
  if (grad != nullptr) {
    std::fill(grad, grad + pb.dim(), 0.0);
    grad_c = grad + n_p;
    grad_ls = grad + n_p + n_i * l;
    ws.grad_theta.assign(static_cast<std::size_t>(n_p), 0.0);
  }
  Terms terms;
  if (parts & kLikelihood) terms.likelihood = likelihood(pb, coeffs, log_sigma, grad_c, grad_ls);
  if (parts & kPrior) {
    double* gth = grad != nullptr ? ws.grad_theta.data() : nullptr;
    terms.prior = kind == PriorKind::integral
                      ? integral_prior(pb, spec.lambda(), ws.theta.data(), coeffs, grad_c, gth, ws)
                      : derivative_prior(pb, spec.lambda(), ws.theta.data(), coeffs, grad_c, gth, ws);
  }
  for (int p = 0; p < n_p; ++p) {
    if (!pos[static_cast<std::size_t>(p)]) continue;
    if (parts & kJacobian) terms.jacobian += theta_u[p];
  }
  if (grad != nullptr) {
    for (int p = 0; p < n_p; ++p) {
      double g = ws.grad_theta[static_cast<std::size_t>(p)];
      if (pos[static_cast<std::size_t>(p)]) {
        g *= ws.theta[static_cast<std::size_t>(p)];
        if (parts & kJacobian) g += 1.0;
      }
      grad[p] = g;
    }
  }
  return terms;
}

void check_shape(const Problem& pb, const PosteriorState& s) {
  if (s.theta_u.size() != pb.num_params() || s.coeffs.rows() != pb.num_states() ||
      s.coeffs.cols() != pb.num_basis() || s.log_sigma.size() != pb.num_states()) {
    throw DimensionError("posterior: state shape does not match the problem");
  }
}

Terms evaluate_state(const PosteriorSpec& spec, PriorKind kind, unsigned parts, const PosteriorState& s) {
  check_shape(spec.problem(), s);
  const Eigen::VectorXd flat = pack(s);
  return evaluate(spec, kind, parts, flat.data(), nullptr);
}

}  // namespace

double log_likelihood(const PosteriorSpec& spec, const PosteriorState& state) {
  return evaluate_state(spec, spec.problem().prior_kind(), kLikelihood, state).likelihood;
}

double log_prior_integral(const PosteriorSpec& spec, const PosteriorState& state) {
  return evaluate_state(spec, PriorKind::integral, kPrior, state).prior;
}

double log_prior_derivative(const PosteriorSpec& spec, const PosteriorState& state) {
  return evaluate_state(spec, PriorKind::derivative, kPrior, state).prior;
}

double log_posterior(const PosteriorSpec& spec, const PosteriorState& state) {
  const Terms t = evaluate_state(spec, spec.problem().prior_kind(), kAll, state);
  return t.likelihood + t.prior + t.jacobian;
}

PosteriorGradient grad_log_posterior(const PosteriorSpec& spec, const PosteriorState& state) {
  const Problem& pb = spec.problem();
  check_shape(pb, state);
  const Eigen::VectorXd flat = pack(state);
  Eigen::VectorXd grad(flat.size());
  const Terms t = evaluate(spec, pb.prior_kind(), kAll, flat.data(), grad.data());
  PosteriorState g = unpack(pb, std::span<const double>(grad.data(), static_cast<std::size_t>(grad.size())));
  PosteriorGradient out;
  out.value = t.likelihood + t.prior + t.jacobian;
  out.theta_u = std::move(g.theta_u);
  out.coeffs = std::move(g.coeffs);
  out.log_sigma = std::move(g.log_sigma);
  return out;
}

double log_posterior_flat(const PosteriorSpec& spec, std::span<const double> flat, std::span<double> grad) {
  const Problem& pb = spec.problem();
  if (static_cast<int>(flat.size()) != pb.dim()) throw DimensionError("log_posterior_flat: wrong state length");
  double* g = nullptr;
  if (!grad.empty()) {
    if (grad.size() != flat.size()) throw DimensionError("log_posterior_flat: wrong gradient length");
    g = grad.data();
  }
  const Terms t = evaluate(spec, pb.prior_kind(), kAll, flat.data(), g);
  return t.likelihood + t.prior + t.jacobian;
}

double log_prior_flat(const PosteriorSpec& spec, PriorKind kind, std::span<const double> flat,
                      std::span<double> grad) {
  const Problem& pb = spec.problem();
  if (static_cast<int>(flat.size()) != pb.dim()) throw DimensionError("log_prior_flat: wrong state length");
  double* g = nullptr;
  if (!grad.empty()) {
    if (grad.size() != flat.size()) throw DimensionError("log_prior_flat: wrong gradient length");
    g = grad.data();
  }
  return evaluate(spec, kind, kPrior, flat.data(), g).prior;
}

}  // namespace colloc
