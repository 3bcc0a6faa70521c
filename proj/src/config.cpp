#include "colloc/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "colloc/errors.hpp"

namespace colloc {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

double get_number(const json& obj, const std::string& key, const std::string& where, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
  return v.get<double>();
}

int get_int(const json& obj, const std::string& key, const std::string& where, int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
  return v.get<int>();
}

std::uint64_t get_seed(const json& obj, const std::string& key, const std::string& where, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    throw ConfigError(where + "." + key + " must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

std::string get_string(const json& obj, const std::string& key, const std::string& where, std::string fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + " must be a string");
  return v.get<std::string>();
}

std::vector<double> get_vector(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(where + " must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> from_eigen(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

int quad_size(const json& q, const char* key) {
  if (!q.contains(key)) return 0;
  const json& v = q.at(key);
  if (v.is_string() && v.get<std::string>() == "auto") return 0;
  if (!v.is_number_integer() || v.get<int>() < 1) {
    throw ConfigError(std::string("quadrature.") + key + " must be a positive integer or \"auto\"");
  }
  return v.get<int>();
}

std::vector<double> parse_times(const json& v) {
  if (v.is_array()) return get_vector(v, "simulation.times");
  check_keys(v, "simulation.times", {"start", "end", "count"});
  if (!v.contains("start") || !v.contains("end") || !v.contains("count")) {
    throw ConfigError("simulation.times needs start, end and count");
  }
  const double a = get_number(v, "start", "simulation.times", 0.0);
  const double b = get_number(v, "end", "simulation.times", 0.0);
  const int n = get_int(v, "count", "simulation.times", 0);
  if (n < 2 || !(b > a)) throw ConfigError("simulation.times needs count >= 2 and end > start");
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) t[static_cast<std::size_t>(k)] = a + (b - a) * k / (n - 1);
  t.back() = b;
  return t;
}

NutsConfig parse_nuts(const json& v, const std::string& where, NutsConfig base) {
  check_keys(v, where, {"iterations", "warmup", "target_accept", "max_depth", "seed", "initial_step_size"});
  base.num_iterations = get_int(v, "iterations", where, base.num_iterations);
  base.num_warmup = get_int(v, "warmup", where, base.num_warmup);
  base.target_accept = get_number(v, "target_accept", where, base.target_accept);
  base.max_tree_depth = get_int(v, "max_depth", where, base.max_tree_depth);
  base.seed = get_seed(v, "seed", where, base.seed);
  base.initial_step_size = get_number(v, "initial_step_size", where, base.initial_step_size);
  return base;
}

}  // namespace

Scenario RunConfig::scenario() const {
  if (!simulation) throw ConfigError("config has no simulation block");
  Scenario s;
  s.name = name;
  s.model = model;
  s.theta = simulation->theta;
  s.x0 = simulation->x0;
  s.noise_sd = simulation->sigma;
  s.times = simulation->times;
  s.component_times = simulation->component_times;
  s.fit = fit;
  s.replications = simulation->replications;
  s.seed = simulation->seed;
  s.rmse_grid = simulation->rmse_grid;
  return s;
}

RunConfig parse_config(const json& doc) {
  check_keys(doc, "config",
             {"name", "model", "basis", "quadrature", "prior", "lambda", "nuts", "init", "domain", "data",
              "simulation", "output", "threads"});
  RunConfig cfg;
  cfg.name = get_string(doc, "name", "config", cfg.name);
  if (!doc.contains("model")) throw ConfigError("config.model is required");
  cfg.model = get_string(doc, "model", "config", "");
  if (!ModelRegistry::instance().contains(cfg.model)) throw ConfigError("unknown model '" + cfg.model + "'");

  if (!doc.contains("basis")) throw ConfigError("config.basis is required");
  const json& b = doc.at("basis");
  check_keys(b, "basis", {"order", "L"});
  cfg.fit.order = get_int(b, "order", "basis", 4);
  if (!b.contains("L")) throw ConfigError("basis.L is required");
  cfg.fit.num_basis = get_int(b, "L", "basis", 0);

  if (doc.contains("quadrature")) {
    const json& q = doc.at("quadrature");
    if (q.is_string() && q.get<std::string>() == "auto") {
      cfg.fit.quad_outer = cfg.fit.quad_inner = 0;
    } else {
      check_keys(q, "quadrature", {"M", "K", "scheme"});
      cfg.fit.quad_outer = quad_size(q, "M");
      cfg.fit.quad_inner = quad_size(q, "K");
      const std::string scheme = get_string(q, "scheme", "quadrature", "composite");
      if (scheme == "composite") {
        cfg.fit.inner_scheme = InnerScheme::composite;
      } else if (scheme == "single") {
        cfg.fit.inner_scheme = InnerScheme::single;
      } else {
        throw ConfigError("quadrature.scheme must be \"composite\" or \"single\"");
      }
    }
  }

  try {
    cfg.fit.prior = prior_kind_from_string(get_string(doc, "prior", "config", "integral"));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  if (doc.contains("lambda")) {
    const json& l = doc.at("lambda");
    check_keys(l, "lambda", {"lambda0", "lambda_star", "alpha", "max", "multiplier"});
    cfg.fit.lambda.lambda0 = get_number(l, "lambda0", "lambda", cfg.fit.lambda.lambda0);
    cfg.fit.lambda.lambda_star = get_number(l, "lambda_star", "lambda", cfg.fit.lambda.lambda_star);
    cfg.fit.lambda.alpha = get_number(l, "alpha", "lambda", cfg.fit.lambda.alpha);
    cfg.fit.lambda.lambda_max = get_number(l, "max", "lambda", cfg.fit.lambda.lambda_max);
    cfg.fit.lambda.multiplier = get_number(l, "multiplier", "lambda", cfg.fit.lambda.multiplier);
  }
  if (doc.contains("nuts")) cfg.fit.nuts = parse_nuts(doc.at("nuts"), "nuts", cfg.fit.nuts);
  cfg.fit.init_nuts = cfg.fit.nuts;
  cfg.fit.init_nuts.num_iterations = 400;
  cfg.fit.init_nuts.num_warmup = 200;
  if (doc.contains("init")) {
    const json& in = doc.at("init");
    check_keys(in, "init", {"penalty", "sigma", "iterations", "warmup"});
    cfg.fit.init_penalty = get_number(in, "penalty", "init", cfg.fit.init_penalty);
    cfg.fit.init_sigma = get_number(in, "sigma", "init", cfg.fit.init_sigma);
    cfg.fit.init_nuts.num_iterations = get_int(in, "iterations", "init", cfg.fit.init_nuts.num_iterations);
    cfg.fit.init_nuts.num_warmup = get_int(in, "warmup", "init", cfg.fit.init_nuts.num_warmup);
  }
  if (doc.contains("domain")) {
    const auto d = get_vector(doc.at("domain"), "domain");
    if (d.size() != 2) throw ConfigError("domain must be [start, end]");
    cfg.fit.domain = Interval{d[0], d[1]};
  }
  cfg.data_path = get_string(doc, "data", "config", "");
  cfg.output_dir = get_string(doc, "output", "config", cfg.output_dir);
  cfg.threads = get_int(doc, "threads", "config", 0);
  if (cfg.threads < 0) throw ConfigError("threads must be nonnegative");

  if (doc.contains("simulation")) {
    const json& s = doc.at("simulation");
    check_keys(s, "simulation", {"theta", "x0", "sigma", "times", "component_times", "replications", "seed", "rmse_grid"});
    SimulationBlock sim;
    for (const char* key : {"theta", "x0", "sigma", "times"}) {
      if (!s.contains(key)) throw ConfigError(std::string("simulation.") + key + " is required");
    }
    sim.theta = to_eigen(get_vector(s.at("theta"), "simulation.theta"));
    sim.x0 = to_eigen(get_vector(s.at("x0"), "simulation.x0"));
    const json& sg = s.at("sigma");
    if (sg.is_number()) {
      sim.sigma = Eigen::VectorXd::Constant(sim.x0.size(), sg.get<double>());
    } else {
      sim.sigma = to_eigen(get_vector(sg, "simulation.sigma"));
    }
    sim.times = parse_times(s.at("times"));
    if (s.contains("component_times")) {
      const json& ct = s.at("component_times");
      if (!ct.is_array()) throw ConfigError("simulation.component_times must be an array of arrays");
      for (const auto& row : ct) sim.component_times.push_back(get_vector(row, "simulation.component_times"));
    }
    sim.replications = get_int(s, "replications", "simulation", 1);
    sim.seed = get_seed(s, "seed", "simulation", cfg.fit.nuts.seed);
    sim.rmse_grid = get_int(s, "rmse_grid", "simulation", 2001);
    cfg.simulation = std::move(sim);
    cfg.scenario().validate();
  } else {
    cfg.fit.validate();
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return parse_config(doc);
}

json RunConfig::to_json() const {
  json doc;
  doc["name"] = name;
  doc["model"] = model;
  doc["basis"] = {{"order", fit.order}, {"L", fit.num_basis}};
  json q;
  q["M"] = fit.quad_outer > 0 ? json(fit.quad_outer) : json("auto");
  q["K"] = fit.quad_inner > 0 ? json(fit.quad_inner) : json("auto");
  q["scheme"] = fit.inner_scheme == InnerScheme::composite ? "composite" : "single";
  doc["quadrature"] = q;
  doc["prior"] = to_string(fit.prior);
  doc["lambda"] = {{"lambda0", fit.lambda.lambda0},
                   {"lambda_star", fit.lambda.lambda_star},
                   {"alpha", fit.lambda.alpha},
                   {"max", fit.lambda.lambda_max},
                   {"multiplier", fit.lambda.multiplier}};
  doc["nuts"] = {{"iterations", fit.nuts.num_iterations},
                 {"warmup", fit.nuts.num_warmup},
                 {"target_accept", fit.nuts.target_accept},
                 {"max_depth", fit.nuts.max_tree_depth},
                 {"seed", fit.nuts.seed},
                 {"initial_step_size", fit.nuts.initial_step_size}};
  doc["init"] = {{"penalty", fit.init_penalty},
                 {"sigma", fit.init_sigma},
                 {"iterations", fit.init_nuts.num_iterations},
                 {"warmup", fit.init_nuts.num_warmup}};
  if (fit.domain) doc["domain"] = {fit.domain->lo, fit.domain->hi};
  if (!data_path.empty()) doc["data"] = data_path;
  doc["output"] = output_dir;
  doc["threads"] = threads;
  if (simulation) {
    json s;
    s["theta"] = from_eigen(simulation->theta);
    s["x0"] = from_eigen(simulation->x0);
    s["sigma"] = from_eigen(simulation->sigma);
    s["times"] = simulation->times;
    if (!simulation->component_times.empty()) s["component_times"] = simulation->component_times;
    s["replications"] = simulation->replications;
    s["seed"] = simulation->seed;
    s["rmse_grid"] = simulation->rmse_grid;
    doc["simulation"] = s;
  }
  return doc;
}

}  // namespace colloc
