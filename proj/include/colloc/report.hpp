/**
 * @file report.hpp
 * @brief Result persistence: JSON documents, flat CSV tables and run
 *        manifests.
 */
#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "colloc/config.hpp"
#include "colloc/harness.hpp"

namespace colloc {

std::string version_string();

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

/// Hash of the normalized configuration document.
std::string config_hash(const RunConfig& config);

/// UTC time as ISO 8601.
std::string timestamp_utc();

nlohmann::json trace_to_json(const LambdaTrace& trace);
/// The only nondeterministic field is "timestamp".
nlohmann::json fit_to_json(const DatasetFit& fit, const std::string& timestamp);
nlohmann::json study_to_json(const Scenario& scenario, const StudyResult& study, const std::string& timestamp);

void write_trace_csv(const std::string& path, const LambdaTrace& trace, const std::vector<std::string>& param_names);
void write_bands_csv(const std::string& path, const TrajectoryBands& bands, const std::vector<std::string>& names);
/// Parameter and initial-condition estimates with central intervals.
void write_estimates_csv(const std::string& path, const DatasetFit& fit);
/// Per parameter: true value, mean estimate, RMSE.
void write_parameter_table_csv(const std::string& path, const Scenario& scenario, const StudyResult& study);
/// Per component and total: trajectory RMSE median and IQR, both
/// reconstructions, and the mean component norm.
void write_trajectory_table_csv(const std::string& path, const Scenario& scenario, const StudyResult& study);
/// One row per replication.
void write_replications_csv(const std::string& path, const Scenario& scenario, const StudyResult& study);
void write_failures_csv(const std::string& path, const StudyResult& study);

nlohmann::json make_manifest(const RunConfig& config, const std::string& command, std::uint64_t seed,
                             const nlohmann::json& outputs);

/// Writes pretty-printed JSON followed by a newline.
void write_json(const std::string& path, const nlohmann::json& doc);

}  // namespace colloc
