#include "colloc/nuts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "colloc/errors.hpp"

namespace colloc {

void NutsConfig::validate() const {
  if (num_warmup < 0 || num_warmup >= num_iterations) {
    throw ConfigError("nuts: need 0 <= warmup < iterations");
  }
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("nuts: target_accept must be in (0, 1)");
  if (max_tree_depth < 1 || max_tree_depth > 12) throw ConfigError("nuts: max_tree_depth must be in [1, 12]");
  if (!(initial_step_size > 0.0)) throw ConfigError("nuts: initial step size must be positive");
}

namespace {

constexpr double kMaxDeltaH = 1000.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct PhasePoint {
  Eigen::VectorXd q, p, g;
  double logp = kNegInf;
};

// Dual averaging of log step size toward a target acceptance statistic.
class StepSizeAdaptation {
 public:
  explicit StepSizeAdaptation(double delta) : delta_(delta) {}
  void set_mu(double mu) { mu_ = mu; }
  void restart() {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }
  void learn(double& eps, double adapt_stat) {
    ++counter_;
    adapt_stat = std::min(1.0, adapt_stat);
    const double eta = 1.0 / (counter_ + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - adapt_stat);
    const double x = mu_ - s_bar_ * std::sqrt(static_cast<double>(counter_)) / kGamma;
    const double x_eta = std::pow(static_cast<double>(counter_), -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    eps = std::exp(x);
  }
  void complete(double& eps) const { eps = std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kKappa = 0.75;
  static constexpr double kT0 = 10.0;
  double delta_;
  double mu_ = std::log(10.0);
  double counter_ = 0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

// Diagonal metric estimation over expanding windows between an initial and a
// terminal buffer of 15% and 10% of warmup.
class MetricAdaptation {
 public:
  MetricAdaptation(int num_warmup, int dim) : num_warmup_(num_warmup), mean_(Eigen::VectorXd::Zero(dim)),
                                             m2_(Eigen::VectorXd::Zero(dim)) {
    enabled_ = num_warmup >= 20;
    init_buffer_ = static_cast<int>(0.15 * num_warmup);
    term_buffer_ = static_cast<int>(0.10 * num_warmup);
    const int middle = num_warmup - init_buffer_ - term_buffer_;
    window_size_ = std::min(25, middle);
    next_window_ = init_buffer_ + window_size_ - 1;
  }

  // Returns true when a window closes and inv_metric was updated.
  bool learn(Eigen::VectorXd& inv_metric, const Eigen::VectorXd& q) {
    if (!enabled_) {
      ++counter_;
      return false;
    }
    if (in_window()) add(q);
    if (counter_ == next_window_ && counter_ != num_warmup_) {
      compute_next_window();
      const double n = static_cast<double>(n_);
      Eigen::VectorXd var = n > 1 ? Eigen::VectorXd(m2_ / (n - 1.0)) : Eigen::VectorXd::Ones(q.size());
      inv_metric = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
      n_ = 0;
      mean_.setZero();
      m2_.setZero();
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ < num_warmup_ - term_buffer_ && counter_ != num_warmup_;
  }
  void add(const Eigen::VectorXd& q) {
    ++n_;
    const Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(q - mean_);
  }
  void compute_next_window() {
    const int last = num_warmup_ - term_buffer_ - 1;
    if (next_window_ == last) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != last) {
      const int boundary = next_window_ + 2 * window_size_;
      if (boundary >= num_warmup_ - term_buffer_) next_window_ = last;
    }
  }

  bool enabled_ = false;
  int num_warmup_;
  int init_buffer_ = 0;
  int term_buffer_ = 0;
  int window_size_ = 0;
  int next_window_ = 0;
  int counter_ = 0;
  long n_ = 0;
  Eigen::VectorXd mean_, m2_;
};

class NutsKernel {
 public:
  NutsKernel(const LogDensity& target, int dim, int max_depth, std::uint64_t seed)
      : target_(target), inv_metric_(Eigen::VectorXd::Ones(dim)), max_depth_(max_depth), rng_(seed) {}

  Eigen::VectorXd& inv_metric() { return inv_metric_; }
  double& step_size() { return eps_; }
  PhasePoint& point() { return z_; }

  void evaluate(PhasePoint& z) {
    z.g.resize(z.q.size());
    double lp = target_(std::span<const double>(z.q.data(), static_cast<std::size_t>(z.q.size())),
                        std::span<double>(z.g.data(), static_cast<std::size_t>(z.g.size())));
    if (!std::isfinite(lp) || !z.g.allFinite()) lp = kNegInf;
    z.logp = lp;
  }

  double hamiltonian(const PhasePoint& z) const {
    if (z.logp == kNegInf) return std::numeric_limits<double>::infinity();
    return -z.logp + 0.5 * (z.p.array().square() * inv_metric_.array()).sum();
  }

  Eigen::VectorXd p_sharp(const PhasePoint& z) const { return inv_metric_.cwiseProduct(z.p); }

  void sample_momentum(PhasePoint& z) {
    z.p.resize(z.q.size());
    for (Eigen::Index k = 0; k < z.p.size(); ++k) z.p[k] = normal_(rng_) / std::sqrt(inv_metric_[k]);
  }

  void leapfrog(PhasePoint& z, double eps) {
    z.p += 0.5 * eps * z.g;
    z.q += eps * inv_metric_.cwiseProduct(z.p);
    evaluate(z);
    if (z.logp != kNegInf) z.p += 0.5 * eps * z.g;
  }

  double uniform() { return uniform_(rng_); }
  double normal() { return normal_(rng_); }

  // Heuristic doubling/halving until one leapfrog step crosses acceptance 0.8.
  void init_step_size() {
    const PhasePoint z_init = z_;
    sample_momentum(z_);
    double h0 = hamiltonian(z_);
    leapfrog(z_, eps_);
    double h = hamiltonian(z_);
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    double delta_h = h0 - h;
    const int direction = delta_h > std::log(0.8) ? 1 : -1;
    for (int guard = 0; guard < 200; ++guard) {
      z_ = z_init;
      sample_momentum(z_);
      h0 = hamiltonian(z_);
      leapfrog(z_, eps_);
      h = hamiltonian(z_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      delta_h = h0 - h;
      if (direction == 1 && !(delta_h > std::log(0.8))) break;
      if (direction == -1 && !(delta_h < std::log(0.8))) break;
      eps_ = direction == 1 ? 2.0 * eps_ : 0.5 * eps_;
      if (eps_ > 1e7 || eps_ < 1e-300) break;
    }
    eps_ = std::clamp(eps_, 1e-12, 1e7);
    z_ = z_init;
  }

  struct Transition {
    double accept_stat = 0.0;
    int depth = 0;
    int n_leapfrog = 0;
    bool divergent = false;
  };

  Transition transition() {
    sample_momentum(z_);
    divergent_ = false;
    PhasePoint z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;

    Eigen::VectorXd p_fwd_fwd = z_.p, p_fwd_bck = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
    Eigen::VectorXd ps_fwd_fwd = p_sharp(z_);
    Eigen::VectorXd ps_fwd_bck = ps_fwd_fwd, ps_bck_fwd = ps_fwd_fwd, ps_bck_bck = ps_fwd_fwd;
    Eigen::VectorXd rho = z_.p;
    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_);
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    int depth = 0;

    while (depth < max_depth_) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(rho.size());
      Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(rho.size());
      bool valid = false;
      double lsw_subtree = kNegInf;
      if (uniform() > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        ps_bck_fwd = ps_fwd_bck;
        valid = build_tree(depth, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, h0, 1.0,
                           n_leapfrog, lsw_subtree, sum_metro_prob);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        ps_fwd_bck = ps_bck_fwd;
        valid = build_tree(depth, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, h0, -1.0,
                           n_leapfrog, lsw_subtree, sum_metro_prob);
        z_bck = z_;
      }
      if (!valid) break;
      ++depth;
      if (lsw_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform() < std::exp(lsw_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = criterion(ps_bck_bck, ps_fwd_fwd, rho);
      Eigen::VectorXd rho_ext = rho_bck + p_fwd_bck;
      persist = persist && criterion(ps_bck_bck, ps_fwd_bck, rho_ext);
      rho_ext = rho_fwd + p_bck_fwd;
      persist = persist && criterion(ps_bck_fwd, ps_fwd_fwd, rho_ext);
      if (!persist) break;
    }
    z_ = z_sample;
    Transition t;
    t.n_leapfrog = n_leapfrog;
    t.depth = depth;
    t.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
    t.divergent = divergent_;
    return t;
  }

 private:
  static bool criterion(const Eigen::VectorXd& ps_minus, const Eigen::VectorXd& ps_plus,
                        const Eigen::VectorXd& rho) {
    return ps_plus.dot(rho) > 0.0 && ps_minus.dot(rho) > 0.0;
  }

  bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& ps_beg, Eigen::VectorXd& ps_end,
                  Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double h0, double sign,
                  int& n_leapfrog, double& log_sum_weight, double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(z_, sign * eps_);
      ++n_leapfrog;
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      if (h - h0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      ps_beg = p_sharp(z_);
      ps_end = ps_beg;
      rho += z_.p;
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    const Eigen::Index n = rho.size();
    Eigen::VectorXd ps_init_end(n), p_init_end(n);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(n);
    double lsw_init = kNegInf;
    if (!build_tree(depth - 1, z_propose, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, h0, sign, n_leapfrog,
                    lsw_init, sum_metro_prob)) {
      return false;
    }
    PhasePoint z_propose_final = z_;
    Eigen::VectorXd ps_final_beg(n), p_final_beg(n);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(n);
    double lsw_final = kNegInf;
    if (!build_tree(depth - 1, z_propose_final, ps_final_beg, ps_end, rho_final, p_final_beg, p_end, h0, sign,
                    n_leapfrog, lsw_final, sum_metro_prob)) {
      return false;
    }
    const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree) {
      z_propose = z_propose_final;
    } else if (uniform() < std::exp(lsw_final - lsw_subtree)) {
      z_propose = z_propose_final;
    }
    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = criterion(ps_beg, ps_end, rho_subtree);
    Eigen::VectorXd rho_ext = rho_init + p_final_beg;
    persist = persist && criterion(ps_beg, ps_final_beg, rho_ext);
    rho_ext = rho_final + p_init_end;
    persist = persist && criterion(ps_init_end, ps_end, rho_ext);
    return persist;
  }

  const LogDensity& target_;
  Eigen::VectorXd inv_metric_;
  int max_depth_;
  double eps_ = 1.0;
  bool divergent_ = false;
  PhasePoint z_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace

Chain sample(const LogDensity& target, const Eigen::VectorXd& init, const NutsConfig& config) {
  config.validate();
  const auto dim = static_cast<int>(init.size());
  if (dim == 0) throw DimensionError("sample: empty initial point");
  NutsKernel kernel(target, dim, config.max_tree_depth, config.seed);

  PhasePoint& z = kernel.point();
  z.q = init;
  kernel.evaluate(z);
  for (int retry = 0; z.logp == kNegInf && retry < 100; ++retry) {
    z.q = init;
    for (int k = 0; k < dim; ++k) z.q[k] += 0.1 * kernel.normal();
    kernel.evaluate(z);
  }
  if (z.logp == kNegInf) {
    throw SamplerInitError("sample: log density is not finite at the initial point or 100 jittered retries");
  }

  kernel.step_size() = config.initial_step_size;
  kernel.init_step_size();
  StepSizeAdaptation step_adapt(config.target_accept);
  step_adapt.set_mu(std::log(10.0 * config.initial_step_size));
  MetricAdaptation metric_adapt(config.num_warmup, dim);

  Chain chain;
  const int kept = config.num_iterations - config.num_warmup;
  chain.draws.resize(kept, dim);
  chain.accept_stats.reserve(static_cast<std::size_t>(config.num_iterations));
  for (int iter = 0; iter < config.num_iterations; ++iter) {
    const auto tr = kernel.transition();
    chain.accept_stats.push_back(tr.accept_stat);
    chain.tree_depths.push_back(tr.depth);
    chain.leapfrog_steps.push_back(tr.n_leapfrog);
    if (iter < config.num_warmup) {
      step_adapt.learn(kernel.step_size(), tr.accept_stat);
      if (metric_adapt.learn(kernel.inv_metric(), kernel.point().q)) {
        kernel.init_step_size();
        step_adapt.set_mu(std::log(10.0 * kernel.step_size()));
        step_adapt.restart();
      }
      if (iter == config.num_warmup - 1) step_adapt.complete(kernel.step_size());
    } else {
      if (tr.divergent) ++chain.divergence_count;
      chain.draws.row(iter - config.num_warmup) = kernel.point().q.transpose();
    }
  }
  chain.step_size = kernel.step_size();
  chain.inv_metric = kernel.inv_metric();
  return chain;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw DimensionError("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ChainSummary summarize(const Chain& chain, const std::vector<CoordTransform>& transforms, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("summarize: level must be in (0, 1)");
  const Eigen::Index n = chain.draws.rows(), dim = chain.draws.cols();
  if (n == 0) throw DimensionError("summarize: chain has no draws");
  ChainSummary s;
  s.level = level;
  s.mean.resize(dim);
  s.lower.resize(dim);
  s.upper.resize(dim);
  std::vector<double> col(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < dim; ++k) {
    const bool exp_map = static_cast<std::size_t>(k) < transforms.size() &&
                         transforms[static_cast<std::size_t>(k)] == CoordTransform::exp;
    double sum = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double v = exp_map ? std::exp(chain.draws(r, k)) : chain.draws(r, k);
      col[static_cast<std::size_t>(r)] = v;
      sum += v;
    }
    s.mean[k] = sum / static_cast<double>(n);
    s.lower[k] = quantile(col, 0.5 * (1.0 - level));
    s.upper[k] = quantile(col, 0.5 * (1.0 + level));
  }
  return s;
}

double mean_leapfrog_energy_error(const LogDensity& target, const Eigen::VectorXd& q, double step_size,
                                  int num_steps, int trials, std::uint64_t seed) {
  NutsKernel kernel(target, static_cast<int>(q.size()), 1, seed);
  double total = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    PhasePoint& z = kernel.point();
    z.q = q;
    kernel.evaluate(z);
    kernel.sample_momentum(z);
    const double h0 = kernel.hamiltonian(z);
    for (int s = 0; s < num_steps; ++s) kernel.leapfrog(z, step_size);
    total += std::abs(kernel.hamiltonian(z) - h0);
  }
  return total / trials;
}

}  // namespace colloc
