#pragma once

// Declarative scenarios: a YAML file naming a flow, fields, a law and a list of
// checks. Loading validates everything up front; running executes the checks
// in order and collects a JSON report plus CSV tables.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace cflow {

struct ScenarioConfig;

class Scenario {
 public:
  /// Throws ConfigError (with the 1-based line when known).
  static Scenario load_file(const std::string& path);
  static Scenario parse(const std::string& text, const std::string& source = "<string>");

  const std::string& name() const;
  const std::string& source() const;
  const std::vector<std::string>& check_names() const;
  const ScenarioConfig& config() const { return *cfg_; }

 private:
  std::shared_ptr<const ScenarioConfig> cfg_;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  /// Nodes per non-fixed quadrature axis.
  std::optional<int> quad_nodes;
  bool parallel = false;
};

enum class CheckStatus { pass, fail, info };
std::string to_string(CheckStatus s);

struct CheckRecord {
  std::string name;
  std::string kind;
  CheckStatus status = CheckStatus::fail;
  bool expect_fail = false;
  nlohmann::ordered_json tolerance;
  nlohmann::ordered_json measured;
  std::string message;
  double runtime_ms = 0.0;
};

struct Report {
  nlohmann::ordered_json scenario;
  nlohmann::ordered_json environment;
  std::vector<CheckRecord> checks;
  /// CSV text keyed by file name.
  std::map<std::string, std::string> tables;
  double runtime_ms = 0.0;
  /// Where the config asked for the report and tables to go (may be empty).
  std::string report_path;
  std::string tables_dir;

  /// 0 if every check is pass or info, 1 otherwise.
  int exit_code() const;
  /// Pretty-printed; every timing field is a line of its own keyed "runtime_ms".
  std::string to_json() const;
  void write_tables(const std::string& dir) const;
};

Report run_scenario(const Scenario& scenario, const RunOptions& opts = {});

struct CheckInfo {
  std::string kind;
  std::string summary;
};
const std::vector<CheckInfo>& available_checks();

std::string cflow_version();

}  // namespace cflow
