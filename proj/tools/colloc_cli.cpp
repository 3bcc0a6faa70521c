// colloc: simulate, fit and study ODE parameter estimation by spline
// collocation on the integrated equations.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "colloc/checks.hpp"
#include "colloc/config.hpp"
#include "colloc/dataset.hpp"
#include "colloc/errors.hpp"
#include "colloc/harness.hpp"
#include "colloc/report.hpp"

namespace fs = std::filesystem;
using namespace colloc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::string config;
  std::string data;
  std::string out;
  std::string prior;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool quiet = false;
};

RunConfig load(const Options& opt) {
  if (opt.config.empty()) throw ConfigError("--config is required");
  RunConfig cfg = load_config(opt.config);
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  if (!opt.data.empty()) cfg.data_path = opt.data;
  if (!opt.prior.empty()) {
    try {
      cfg.fit.prior = prior_kind_from_string(opt.prior);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (opt.seed) {
    cfg.fit.nuts.seed = *opt.seed;
    cfg.fit.init_nuts.seed = *opt.seed;
    if (cfg.simulation) cfg.simulation->seed = *opt.seed;
  }
  if (opt.threads) cfg.threads = *opt.threads;
  return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& file) { return (fs::path(cfg.output_dir) / file).string(); }

void make_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + cfg.output_dir + ": " + ec.message());
}

int cmd_simulate(const Options& opt) {
  RunConfig cfg = load(opt);
  const Scenario sc = cfg.scenario();
  make_out_dir(cfg);
  nlohmann::json files = nlohmann::json::array();
  for (int k = 0; k < sc.replications; ++k) {
    const std::uint64_t rep_seed = derive_seed(sc.seed, static_cast<std::uint64_t>(k));
    const std::uint64_t data_seed = derive_seed(rep_seed, 0);
    const std::string name = sc.name + "_rep" + std::to_string(k) + ".csv";
    write_csv_file(out_path(cfg, name), generate_data(sc, data_seed));
    files.push_back({{"file", name}, {"replication", k}, {"replication_seed", rep_seed}, {"data_seed", data_seed}});
  }
  write_json(out_path(cfg, "manifest.json"), make_manifest(cfg, "simulate", sc.seed, files));
  if (!opt.quiet) std::cerr << "wrote " << sc.replications << " dataset(s) to " << cfg.output_dir << "\n";
  return kExitOk;
}

int cmd_fit(const Options& opt) {
  RunConfig cfg = load(opt);
  if (cfg.data_path.empty()) throw ConfigError("fit needs a data file (--data or config.data)");
  const Observations data = read_csv_file(cfg.data_path);
  const ModelPtr model = ModelRegistry::instance().create(cfg.model);
  make_out_dir(cfg);

  auto log_step = [&](const LambdaStep& st) {
    if (opt.quiet) return;
    std::fprintf(stderr, "lambda %-10g err %-12.6g theta", st.lambda, st.err);
    for (Eigen::Index p = 0; p < st.theta_mean.size(); ++p) std::fprintf(stderr, " %.5g", st.theta_mean[p]);
    std::fprintf(stderr, "\n");
  };
  DatasetFit fit;
  try {
    fit = fit_dataset(model, data, cfg.fit, log_step);
  } catch (const ConfigError&) {
    throw;
  } catch (const DimensionError&) {
    throw;
  } catch (const DomainError&) {
    throw;
  } catch (const std::exception& e) {
    nlohmann::json dump{{"error", e.what()}, {"config", cfg.to_json()}, {"data", cfg.data_path}};
    write_json(out_path(cfg, "failure.json"), dump);
    throw;
  }

  write_json(out_path(cfg, "fit.json"), fit_to_json(fit, timestamp_utc()));
  write_trace_csv(out_path(cfg, "lambda_trace.csv"), fit.selection.trace, model->param_names());
  write_bands_csv(out_path(cfg, "bands.csv"), fit.bands, model->state_names());
  write_estimates_csv(out_path(cfg, "estimates.csv"), fit);
  const nlohmann::json outputs{"fit.json", "lambda_trace.csv", "bands.csv", "estimates.csv"};
  write_json(out_path(cfg, "manifest.json"), make_manifest(cfg, "fit", cfg.fit.nuts.seed, outputs));
  if (!opt.quiet) {
    std::cerr << "selected lambda " << fit.selection.trace.selected << " ("
              << to_string(fit.selection.trace.stop_reason) << ")\n";
  }
  return kExitOk;
}

int cmd_study(const Options& opt) {
  RunConfig cfg = load(opt);
  const Scenario sc = cfg.scenario();
  make_out_dir(cfg);
  int done = 0;
  auto progress = [&](const ReplicationResult& r) {
    ++done;
    if (opt.quiet) return;
    if (r.ok) {
      std::fprintf(stderr, "[%d/%d] rep %d lambda %g rmse %.4g (%.1fs)\n", done, sc.replications, r.index,
                   r.lambda_hat, r.rmse.total, r.wall_seconds);
    } else {
      std::fprintf(stderr, "[%d/%d] rep %d failed: %s\n", done, sc.replications, r.index, r.error.c_str());
    }
  };
  const StudyResult study = run_study(sc, cfg.threads, progress);

  write_json(out_path(cfg, "study.json"), study_to_json(sc, study, timestamp_utc()));
  write_parameter_table_csv(out_path(cfg, "parameters.csv"), sc, study);
  write_trajectory_table_csv(out_path(cfg, "trajectory_rmse.csv"), sc, study);
  write_replications_csv(out_path(cfg, "replications.csv"), sc, study);
  write_failures_csv(out_path(cfg, "failures.csv"), study);
  const nlohmann::json outputs{"study.json", "parameters.csv", "trajectory_rmse.csv", "replications.csv",
                               "failures.csv"};
  write_json(out_path(cfg, "manifest.json"), make_manifest(cfg, "study", sc.seed, outputs));

  const int failed = study.aggregates.failed;
  if (!opt.quiet) std::cerr << failed << " of " << sc.replications << " replications failed\n";
  return 5 * failed > sc.replications ? kExitRuntime : kExitOk;
}

int cmd_check(const Options& opt) {
  const auto results = run_property_checks(opt.seed.value_or(1));
  bool all = true;
  for (const auto& r : results) {
    if (!opt.quiet || !r.passed) {
      std::printf("%-4s %-32s %.3e (tol %.0e)\n", r.passed ? "ok" : "FAIL", r.name.c_str(), r.value, r.tolerance);
    }
    all = all && r.passed;
  }
  return all ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian spline collocation for ODE parameter estimation"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opt.config, "JSON run configuration");
    if (needs_config) c->required();
    sub->add_option("--out", opt.out, "Output directory (overrides config)");
    sub->add_option("--seed", opt.seed, "Seed (overrides config)");
    sub->add_option("--threads", opt.threads, "Worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
    sub->add_flag("--quiet,-q", opt.quiet, "No progress output");
  };
  auto* simulate = app.add_subcommand("simulate", "Write synthetic datasets");
  add_common(simulate, true);
  auto* fit = app.add_subcommand("fit", "Fit one dataset");
  add_common(fit, true);
  fit->add_option("--data", opt.data, "Observation CSV (overrides config)");
  fit->add_option("--prior", opt.prior, "integral or derivative")->check(CLI::IsMember({"integral", "derivative"}));
  auto* study = app.add_subcommand("study", "Replicated simulation study");
  add_common(study, true);
  study->add_option("--prior", opt.prior, "integral or derivative")->check(CLI::IsMember({"integral", "derivative"}));
  auto* check = app.add_subcommand("check", "Run the property suite");
  check->add_option("--seed", opt.seed, "Seed");
  check->add_flag("--quiet,-q", opt.quiet, "Print failures only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(opt);
    if (fit->parsed()) return cmd_fit(opt);
    if (study->parsed()) return cmd_study(opt);
    if (check->parsed()) return cmd_check(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
