#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nullctl/optimize.hpp"

namespace nullctl {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// System block of a config document: heat1d (n, c, horizon, scheme) or a
/// dense pair of matrices with an explicit mesh parameter h.
struct SystemSpec {
  std::string type = "heat1d";
  int n = 10;
  double c = 1.0;
  double horizon = 1.0;
  Scheme scheme = Scheme::Eliminated;
  Matrix a;  // dense type only
  Matrix b;
  double h = 0.5;  // dense type only (heat1d derives h = 1/(n+1))
};

struct ExperimentConfig {
  SystemSpec system;
  std::string y0_expr = "exp(-x^2)";  // named initial profile, or
  Vector y0_raw;                      // an explicit vector (expr ignored when set)
  DualParameters dual;
  OptimizerConfig optimizer;
  std::string out = "out";
  std::uint64_t seed = 42;
};

/// Parses and validates a config document; throws std::invalid_argument
/// naming the offending field.
[[nodiscard]] ExperimentConfig parse_config(const nlohmann::json& doc);
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);

/// Effective configuration with all defaults materialized (manifest echo).
[[nodiscard]] nlohmann::json config_to_json(const ExperimentConfig& config);

[[nodiscard]] SemidiscreteSystem build_system(const SystemSpec& spec);
[[nodiscard]] InitialData build_initial(const SemidiscreteSystem& system,
                                        const ExperimentConfig& config);

/// Run manifest: effective config, version, timestamp, produced files, and
/// headline metrics. `write_manifest` verifies every referenced file exists.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::vector<std::string> outputs;                // paths relative to the out dir
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> notes;
};

void write_manifest(const std::filesystem::path& out_dir, const RunManifest& manifest);

}  // namespace nullctl
