/**
 * @file config.hpp
 * @brief JSON run configuration. Every object is checked for unknown keys
 *        before anything runs.
 */
#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "colloc/harness.hpp"

namespace colloc {

struct SimulationBlock {
  Eigen::VectorXd theta, x0, sigma;
  std::vector<double> times;
  std::vector<std::vector<double>> component_times;
  int replications = 1;
  std::uint64_t seed = 1;
  int rmse_grid = 2001;
};

struct RunConfig {
  std::string name = "run";
  std::string model;
  FitSettings fit;
  std::optional<SimulationBlock> simulation;
  std::string data_path;
  std::string output_dir = "out";
  /// 0 = available cores.
  int threads = 0;

  /// Scenario for simulate/study; requires a simulation block.
  Scenario scenario() const;
  /// Normalized document; parse_config(to_json()) round-trips.
  nlohmann::json to_json() const;
};

/// Throws ConfigError on schema violations.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

}  // namespace colloc
