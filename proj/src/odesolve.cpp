#include "colloc/odesolve.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "colloc/errors.hpp"

namespace colloc {
namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense output (Hairer's contd5).
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

class Rhs {
 public:
  Rhs(const OdeModel& model, const Eigen::VectorXd& theta) : model_(model), theta_(theta) {}
  void operator()(double t, const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
    out.resize(x.size());
    model_.rhs(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
               std::span<const double>(theta_.data(), static_cast<std::size_t>(theta_.size())), t,
               std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  }

 private:
  const OdeModel& model_;
  const Eigen::VectorXd& theta_;
};

double error_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0, const Eigen::VectorXd& y1,
                  const SolveConfig& cfg) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < err.size(); ++k) {
    const double sk = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y0[k]), std::abs(y1[k]));
    s += (err[k] / sk) * (err[k] / sk);
  }
  return std::sqrt(s / static_cast<double>(err.size()));
}

double initial_step(const Rhs& f, double t0, const Eigen::VectorXd& y0, const Eigen::VectorXd& f0, double span,
                    const SolveConfig& cfg) {
  const Eigen::ArrayXd sk = cfg.abs_tol + cfg.rel_tol * y0.array().abs();
  const double dnf = std::sqrt((f0.array() / sk).square().mean());
  const double dny = std::sqrt((y0.array() / sk).square().mean());
  double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * dny / dnf;
  h = std::min(h, span);
  Eigen::VectorXd y1 = y0 + h * f0, f1;
  f(t0 + h, y1, f1);
  const double der2 = std::sqrt(((f1 - f0).array() / sk).square().mean()) / h;
  const double der12 = std::max(der2, dnf);
  const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
  return std::min({100.0 * h, h1, span});
}

}  // namespace

std::vector<double> uniform_grid(Interval interval, int n) {
  if (n < 2) throw DimensionError("uniform_grid: need at least two points");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) g[static_cast<std::size_t>(k)] = interval.lo + interval.length() * k / (n - 1);
  g.back() = interval.hi;
  return g;
}

Eigen::MatrixXd solve(const OdeModel& model, const Eigen::VectorXd& theta, const Eigen::VectorXd& x0,
                      const std::vector<double>& grid, const SolveConfig& cfg) {
  if (grid.empty()) throw DimensionError("solve: empty grid");
  if (!(cfg.rel_tol > 0.0 && cfg.abs_tol > 0.0)) throw ConfigError("solve: tolerances must be positive");
  if (x0.size() != model.dim_state() || theta.size() != model.dim_params()) {
    throw DimensionError("solve: state or parameter length does not match the model");
  }
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (grid[k] < grid[k - 1]) throw DomainError("solve: grid must be nondecreasing");
  }
  const Eigen::Index n = x0.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(grid.size()), n);
  const Rhs f(model, theta);

  double t = grid.front();
  const double t_end = grid.back();
  Eigen::VectorXd y = x0;
  std::size_t next = 0;
  while (next < grid.size() && grid[next] <= t) out.row(static_cast<Eigen::Index>(next++)) = y.transpose();
  if (next == grid.size()) return out;

  Eigen::VectorXd k1, k2, k3, k4, k5, k6, k7, y1, ytmp, err;
  Eigen::VectorXd r1, r2, r3, r4, r5;
  f(t, y, k1);
  double h = initial_step(f, t, y, k1, t_end - t, cfg);
  double fac_old = 1e-4;
  constexpr double beta = 0.04, safe = 0.9, fac_min = 0.2, fac_max = 10.0;
  const double expo1 = 0.2 - beta * 0.75;
  bool last_rejected = false;

  for (long step = 0;; ++step) {
    if (step >= cfg.max_steps) {
      throw SolverStepLimitError(t, "solve: step limit reached at t = " + std::to_string(t));
    }
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      throw SolverStepLimitError(t, "solve: step size underflow at t = " + std::to_string(t));
    }
    if (t + h > t_end) h = t_end - t;

    ytmp = y + h * a21 * k1;
    f(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + h, ytmp, k6);
    y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    f(t + h, y1, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double e = error_norm(err, y, y1, cfg);
    if (!std::isfinite(e) || !y1.allFinite()) e = 1e10;
    const double fac11 = std::pow(e, expo1);
    if (e <= 1.0) {
      // Dense-output coefficients for (t, t + h].
      const Eigen::VectorXd ydiff = y1 - y;
      const Eigen::VectorXd bspl = h * k1 - ydiff;
      r1 = y;
      r2 = ydiff;
      r3 = bspl;
      r4 = ydiff - h * k7 - bspl;
      r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      const double t_new = t + h;
      while (next < grid.size() && grid[next] <= t_new) {
        const double s = (grid[next] - t) / h;
        const double s1 = 1.0 - s;
        out.row(static_cast<Eigen::Index>(next)) = (r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)))).transpose();
        ++next;
      }
      t = t_new;
      y = y1;
      k1 = k7;
      if (!y.allFinite()) throw SolverStepLimitError(t, "solve: non-finite state at t = " + std::to_string(t));
      if (next == grid.size() || t >= t_end) break;
      fac_old = std::max(e, 1e-4);
      double fac = fac11 / std::pow(fac_old, beta);
      fac = std::clamp(fac / safe, 1.0 / fac_max, 1.0 / fac_min);
      double h_new = h / fac;
      if (last_rejected) h_new = std::min(h_new, h);
      last_rejected = false;
      h = h_new;
    } else {
      h = h / std::min(1.0 / fac_min, fac11 / safe);
      last_rejected = true;
    }
  }
  while (next < grid.size()) out.row(static_cast<Eigen::Index>(next++)) = y.transpose();
  return out;
}

TrajectoryRmse trajectory_rmse(const OdeModel& model, const Eigen::VectorXd& theta_hat,
                               const Eigen::VectorXd& x0_hat, const Eigen::VectorXd& theta_true,
                               const Eigen::VectorXd& x0_true, Interval interval, int n_grid,
                               const SolveConfig& config) {
  if (n_grid < 100) throw DimensionError("trajectory_rmse: n_grid must be at least 100");
  const std::vector<double> grid = uniform_grid(interval, n_grid);
  const Eigen::MatrixXd truth = solve(model, theta_true, x0_true, grid, config);
  TrajectoryRmse out;
  out.per_component.resize(truth.cols());
  Eigen::MatrixXd est;
  try {
    est = solve(model, theta_hat, x0_hat, grid, config);
  } catch (const SolverStepLimitError&) {
    out.per_component.setConstant(std::numeric_limits<double>::infinity());
    out.total = std::numeric_limits<double>::infinity();
    out.diverged = true;
    return out;
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < truth.cols(); ++i) {
    const double ms = (est.col(i) - truth.col(i)).squaredNorm() / static_cast<double>(n_grid);
    out.per_component[i] = std::sqrt(ms);
    sum += ms;
  }
  out.total = std::sqrt(sum);
  return out;
}

}  // namespace colloc
