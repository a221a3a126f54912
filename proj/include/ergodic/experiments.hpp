#pragma once

#include "ergodic/errors.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ergodic::experiments {

using nlohmann::json;

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"renewal", "diffusion", "periodic", "maxage", "branching", "verify-core"};
  return kinds;
}

// Parsed, validated configuration. `params` is the experiment's block with defaults filled in.
struct ExperimentConfig {
  std::string name;  // free label, defaults to the experiment kind
  std::string experiment;
  std::uint64_t seed = 1;
  std::string output;  // empty: decided by the caller
  int jobs = 1;
  std::map<std::string, double> tolerances;
  json params;
};

// Throws ConfigError naming the offending key.
ExperimentConfig parse_config(const json& doc);
ExperimentConfig load_config(const std::string& path);

struct Check {
  std::string name;
  bool pass = false;
  double value = 0;
  double threshold = 0;
  std::string relation;  // how value is compared to threshold, e.g. "<=", ">=", "<"
  int criterion = 0;     // acceptance criterion this check stands for; 0 for supporting checks
};

struct OutputFile {
  std::string name;
  std::string contents;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<Check> checks;
  std::map<std::string, double> metrics;  // deterministic given the seed
  std::vector<OutputFile> files;
  std::vector<std::string> notes;  // caveats, e.g. a certificate outside its hypotheses
  std::map<std::string, double> timings;  // seconds; excluded from comparisons

  bool pass() const;
  json to_json() const;
};

RunReport run(const ExperimentConfig& cfg);

// Writes every CSV plus report.json into dir, each through a temporary file and a rename.
// Returns the written paths.
std::vector<std::string> write_outputs(const RunReport& report, const std::string& dir);

struct DiffEntry {
  std::string field;
  std::string a, b;
  double relative = 0;  // NaN for non-numeric differences
};

// Field-wise numeric diff of two report.json documents; timings are ignored. Throws ConfigError
// when the experiment kinds differ.
std::vector<DiffEntry> compare(const json& a, const json& b, double rel_threshold = 1e-9);

// Preset files (*.json) in dir, sorted by name.
std::vector<std::string> preset_files(const std::string& dir);

}  // namespace ergodic::experiments
