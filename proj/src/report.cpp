#include "colloc/report.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "colloc/errors.hpp"

#ifndef COLLOC_VERSION
#define COLLOC_VERSION "0.0.0"
#endif

namespace colloc {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << std::setprecision(17);
  return out;
}

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec(m.row(r).transpose()));
  return rows;
}

json rmse_json(const TrajectoryRmse& r) {
  return {{"per_component", vec(r.per_component)}, {"total", r.total}, {"diverged", r.diverged}};
}

json spread_json(const Spread& s) { return {{"median", s.median}, {"iqr", s.iqr}}; }

}  // namespace

std::string version_string() { return COLLOC_VERSION; }

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& config) { return fnv1a_hex(config.to_json().dump()); }

std::string timestamp_utc() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json trace_to_json(const LambdaTrace& trace) {
  json steps = json::array();
  for (const auto& st : trace.steps) {
    steps.push_back({{"lambda", st.lambda},
                     {"sampled", st.sampled},
                     {"err", st.err},
                     {"theta_mean", vec(st.theta_mean)},
                     {"theta_lower", vec(st.theta_lower)},
                     {"theta_upper", vec(st.theta_upper)},
                     {"sigma_mean", vec(st.sigma_mean)},
                     {"overlap", st.overlap},
                     {"divergences", st.divergences},
                     {"step_size", st.step_size},
                     {"mean_accept", st.mean_accept}});
  }
  return {{"steps", steps},
          {"selected", trace.selected},
          {"selected_index", trace.selected_index},
          {"stop_reason", to_string(trace.stop_reason)}};
}

json fit_to_json(const DatasetFit& fit, const std::string& timestamp) {
  const Problem& pb = *fit.problem;
  const FitResult& r = fit.selection.fit;
  json doc;
  doc["timestamp"] = timestamp;
  doc["version"] = version_string();
  doc["model"] = pb.model().name();
  doc["prior"] = to_string(pb.prior_kind());
  doc["param_names"] = pb.model().param_names();
  doc["state_names"] = pb.model().state_names();
  doc["domain"] = {pb.basis().domain().lo + pb.time_offset(), pb.basis().domain().hi + pb.time_offset()};
  doc["num_basis"] = pb.num_basis();
  doc["quadrature"] = {{"M", pb.plan().outer_size()}, {"K", pb.plan().inner_size}};
  doc["initial"] = {{"theta", vec(fit.init.theta_hat)},
                    {"theta_lower", vec(fit.init.theta_lower)},
                    {"theta_upper", vec(fit.init.theta_upper)},
                    {"flat_target", fit.init.flat_target}};
  doc["lambda_trace"] = trace_to_json(fit.selection.trace);
  doc["estimates"] = {{"lambda", r.lambda},
                      {"theta_mean", vec(r.theta_mean)},
                      {"theta_lower", vec(r.theta_lower)},
                      {"theta_upper", vec(r.theta_upper)},
                      {"sigma_mean", vec(r.sigma_mean)},
                      {"sigma_lower", vec(r.sigma_lower)},
                      {"sigma_upper", vec(r.sigma_upper)},
                      {"x0_mean", vec(r.x0_mean)},
                      {"x0_lower", vec(r.x0_lower)},
                      {"x0_upper", vec(r.x0_upper)},
                      {"coeff_mean", matrix_rows(r.coeff_mean)}};
  doc["chain"] = {{"num_kept", r.chain.num_kept()},
                  {"divergences", r.chain.divergence_count},
                  {"step_size", r.chain.step_size},
                  {"inv_metric", vec(r.chain.inv_metric)}};
  return doc;
}

json study_to_json(const Scenario& scenario, const StudyResult& study, const std::string& timestamp) {
  json reps = json::array();
  for (const auto& r : study.replications) {
    json j{{"index", r.index}, {"seed", r.seed}, {"ok", r.ok}, {"wall_seconds", r.wall_seconds}};
    if (!r.ok) {
      j["error"] = r.error;
    } else {
      j["theta_hat"] = vec(r.theta_hat);
      j["theta_lower"] = vec(r.theta_lower);
      j["theta_upper"] = vec(r.theta_upper);
      j["sigma_hat"] = vec(r.sigma_hat);
      j["x0_hat"] = vec(r.x0_hat);
      j["lambda_hat"] = r.lambda_hat;
      j["stop_reason"] = to_string(r.stop_reason);
      j["err_initial"] = r.err_initial;
      j["err_selected"] = r.err_selected;
      j["rmse"] = rmse_json(r.rmse);
      j["rmse_true_x0"] = rmse_json(r.rmse_true_x0);
      j["component_norm"] = vec(r.component_norm);
      j["divergences"] = r.divergences;
      j["lambda_trace"] = trace_to_json(r.trace);
    }
    reps.push_back(j);
  }
  const StudyAggregates& a = study.aggregates;
  json comp = json::array(), comp_true = json::array();
  for (const auto& s : a.rmse_component) comp.push_back(spread_json(s));
  for (const auto& s : a.rmse_true_x0_component) comp_true.push_back(spread_json(s));
  return {{"timestamp", timestamp},
          {"version", version_string()},
          {"scenario", scenario.name},
          {"model", scenario.model},
          {"theta_true", vec(scenario.theta)},
          {"x0_true", vec(scenario.x0)},
          {"replications", reps},
          {"aggregates",
           {{"succeeded", a.succeeded},
            {"failed", a.failed},
            {"theta_mean", vec(a.theta_mean)},
            {"theta_rmse", vec(a.theta_rmse)},
            {"sigma_mean", vec(a.sigma_mean)},
            {"rmse_component", comp},
            {"rmse_total", spread_json(a.rmse_total)},
            {"rmse_true_x0_component", comp_true},
            {"rmse_true_x0_total", spread_json(a.rmse_true_x0_total)},
            {"component_norm_mean", vec(a.component_norm_mean)},
            {"diverged", a.diverged}}}};
}

void write_trace_csv(const std::string& path, const LambdaTrace& trace, const std::vector<std::string>& names) {
  auto out = open_out(path);
  out << "lambda,sampled,err,selected";
  for (const auto& n : names) out << ',' << n << "_mean," << n << "_lower," << n << "_upper," << n << "_overlap";
  out << '\n';
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const auto& st = trace.steps[k];
    out << st.lambda << ',' << (st.sampled ? 1 : 0) << ',' << st.err << ','
        << (static_cast<int>(k) == trace.selected_index ? 1 : 0);
    for (Eigen::Index p = 0; p < st.theta_mean.size(); ++p) {
      out << ',' << st.theta_mean[p] << ',' << st.theta_lower[p] << ',' << st.theta_upper[p] << ',';
      if (static_cast<std::size_t>(p) < st.overlap.size()) out << st.overlap[static_cast<std::size_t>(p)];
    }
    out << '\n';
  }
}

void write_bands_csv(const std::string& path, const TrajectoryBands& bands, const std::vector<std::string>& names) {
  auto out = open_out(path);
  out << "time";
  for (const auto& n : names) out << ',' << n << "_mean," << n << "_lower," << n << "_upper";
  out << '\n';
  for (std::size_t g = 0; g < bands.times.size(); ++g) {
    const auto r = static_cast<Eigen::Index>(g);
    out << bands.times[g];
    for (Eigen::Index i = 0; i < bands.mean.cols(); ++i) {
      out << ',' << bands.mean(r, i) << ',' << bands.lower(r, i) << ',' << bands.upper(r, i);
    }
    out << '\n';
  }
}

void write_estimates_csv(const std::string& path, const DatasetFit& fit) {
  auto out = open_out(path);
  const FitResult& r = fit.selection.fit;
  const auto pnames = fit.problem->model().param_names();
  const auto snames = fit.problem->model().state_names();
  out << "quantity,mean,lower,upper\n";
  for (Eigen::Index p = 0; p < r.theta_mean.size(); ++p) {
    out << pnames[static_cast<std::size_t>(p)] << ',' << r.theta_mean[p] << ',' << r.theta_lower[p] << ','
        << r.theta_upper[p] << '\n';
  }
  for (Eigen::Index i = 0; i < r.x0_mean.size(); ++i) {
    out << snames[static_cast<std::size_t>(i)] << "(t1)," << r.x0_mean[i] << ',' << r.x0_lower[i] << ','
        << r.x0_upper[i] << '\n';
  }
  for (Eigen::Index i = 0; i < r.sigma_mean.size(); ++i) {
    out << "sigma_" << snames[static_cast<std::size_t>(i)] << ',' << r.sigma_mean[i] << ',' << r.sigma_lower[i]
        << ',' << r.sigma_upper[i] << '\n';
  }
}

void write_parameter_table_csv(const std::string& path, const Scenario& scenario, const StudyResult& study) {
  auto out = open_out(path);
  const auto names = ModelRegistry::instance().create(scenario.model)->param_names();
  const StudyAggregates& a = study.aggregates;
  out << "parameter,true,mean,rmse,replications\n";
  for (Eigen::Index p = 0; p < scenario.theta.size(); ++p) {
    out << names[static_cast<std::size_t>(p)] << ',' << scenario.theta[p] << ',' << a.theta_mean[p] << ','
        << a.theta_rmse[p] << ',' << a.succeeded << '\n';
  }
}

void write_trajectory_table_csv(const std::string& path, const Scenario& scenario, const StudyResult& study) {
  auto out = open_out(path);
  const auto names = ModelRegistry::instance().create(scenario.model)->state_names();
  const StudyAggregates& a = study.aggregates;
  out << "component,median,iqr,median_true_x0,iqr_true_x0,mean_norm\n";
  for (std::size_t i = 0; i < a.rmse_component.size(); ++i) {
    out << names[i] << ',' << a.rmse_component[i].median << ',' << a.rmse_component[i].iqr << ','
        << a.rmse_true_x0_component[i].median << ',' << a.rmse_true_x0_component[i].iqr << ','
        << a.component_norm_mean[static_cast<Eigen::Index>(i)] << '\n';
  }
  out << "total," << a.rmse_total.median << ',' << a.rmse_total.iqr << ',' << a.rmse_true_x0_total.median << ','
      << a.rmse_true_x0_total.iqr << ",\n";
}

void write_replications_csv(const std::string& path, const Scenario& scenario, const StudyResult& study) {
  auto out = open_out(path);
  const ModelPtr m = ModelRegistry::instance().create(scenario.model);
  const auto pnames = m->param_names();
  const auto snames = m->state_names();
  out << "index,seed,ok,lambda_hat,stop_reason,err_initial,err_selected";
  for (const auto& n : pnames) out << ',' << n;
  for (const auto& n : snames) out << ",sigma_" << n;
  for (const auto& n : snames) out << ',' << n << "0";
  for (const auto& n : snames) out << ",rmse_" << n;
  out << ",rmse_total,rmse_true_x0_total,diverged,wall_seconds\n";
  for (const auto& r : study.replications) {
    out << r.index << ',' << r.seed << ',' << (r.ok ? 1 : 0);
    if (!r.ok) {
      const std::size_t blanks = 4 + pnames.size() + 3 * snames.size() + 3;
      for (std::size_t k = 0; k < blanks; ++k) out << ',';
      out << ',' << r.wall_seconds << '\n';
      continue;
    }
    out << ',' << r.lambda_hat << ',' << to_string(r.stop_reason) << ',' << r.err_initial << ',' << r.err_selected;
    for (Eigen::Index p = 0; p < r.theta_hat.size(); ++p) out << ',' << r.theta_hat[p];
    for (Eigen::Index i = 0; i < r.sigma_hat.size(); ++i) out << ',' << r.sigma_hat[i];
    for (Eigen::Index i = 0; i < r.x0_hat.size(); ++i) out << ',' << r.x0_hat[i];
    for (Eigen::Index i = 0; i < r.rmse.per_component.size(); ++i) out << ',' << r.rmse.per_component[i];
    out << ',' << r.rmse.total << ',' << r.rmse_true_x0.total << ',' << (r.rmse.diverged ? 1 : 0) << ','
        << r.wall_seconds << '\n';
  }
}

void write_failures_csv(const std::string& path, const StudyResult& study) {
  auto out = open_out(path);
  out << "index,seed,error\n";
  for (const auto& r : study.replications) {
    if (r.ok) continue;
    std::string msg = r.error;
    for (char& c : msg) {
      if (c == '"') c = '\'';
      if (c == '\n') c = ' ';
    }
    out << r.index << ',' << r.seed << ",\"" << msg << "\"\n";
  }
}

json make_manifest(const RunConfig& config, const std::string& command, std::uint64_t seed, const json& outputs) {
  return {{"version", version_string()},
          {"command", command},
          {"config_hash", config_hash(config)},
          {"seed", seed},
          {"timestamp", timestamp_utc()},
          {"config", config.to_json()},
          {"outputs", outputs}};
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << doc.dump(2) << '\n';
}

}  // namespace colloc
