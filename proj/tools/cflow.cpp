// Command-line front end for scenario files.
//   cflow run <config> [--report PATH] [--tables DIR] [--seed N] [--quad N] [--parallel]
//   cflow list-checks
//   cflow validate <config>
// Exit codes: 0 all checks pass (info allowed), 1 a check failed, 2 bad config or usage.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "cflow/errors.hpp"
#include "cflow/scenario.hpp"

namespace {

constexpr int kConfigError = 2;

void print_summary(const cflow::Report& rep, std::ostream& os) {
  for (const auto& c : rep.checks) {
    os << to_string(c.status) << "  " << c.name;
    if (!c.message.empty()) os << "  (" << c.message << ")";
    os << "\n";
  }
}

int run(const std::string& config, const std::string& report, const std::string& tables, const cflow::RunOptions& opts) {
  const auto scenario = cflow::Scenario::load_file(config);
  const auto rep = cflow::run_scenario(scenario, opts);
  const std::string path = report.empty() ? rep.report_path : report;
  if (path.empty()) {
    std::cout << rep.to_json();
  } else {
    std::ofstream out(path);
    if (!out) {
      std::cerr << "cannot write report '" << path << "'\n";
      return kConfigError;
    }
    out << rep.to_json();
    print_summary(rep, std::cout);
  }
  const std::string dir = tables.empty() ? rep.tables_dir : tables;
  if (!dir.empty()) rep.write_tables(dir);
  return rep.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conjugate-flow scenario runner"};
  app.set_version_flag("--version", cflow::cflow_version());
  app.require_subcommand(1);

  std::string config, report, tables;
  std::uint64_t seed = 0;
  int quad = 0;
  bool parallel = false;

  auto* run_cmd = app.add_subcommand("run", "run every check in a scenario");
  run_cmd->add_option("config", config, "scenario file")->required();
  run_cmd->add_option("--report", report, "write the JSON report here instead of stdout");
  run_cmd->add_option("--tables", tables, "directory for CSV tables");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "override the scenario seed");
  auto* quad_opt = run_cmd->add_option("--quad", quad, "quadrature nodes per axis")->check(CLI::Range(2, 256));
  run_cmd->add_flag("--parallel", parallel, "run independent checks concurrently");

  auto* list_cmd = app.add_subcommand("list-checks", "list the available check kinds");

  auto* validate_cmd = app.add_subcommand("validate", "parse and validate a scenario without running it");
  validate_cmd->add_option("config", config, "scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*list_cmd) {
      for (const auto& c : cflow::available_checks()) std::cout << c.kind << "\t" << c.summary << "\n";
      return 0;
    }
    if (*validate_cmd) {
      const auto s = cflow::Scenario::load_file(config);
      std::cout << s.name() << ": " << s.check_names().size() << " check(s) ok\n";
      return 0;
    }
    cflow::RunOptions opts;
    if (*seed_opt) opts.seed = seed;
    if (*quad_opt) opts.quad_nodes = quad;
    opts.parallel = parallel;
    return run(config, report, tables, opts);
  } catch (const cflow::ConfigError& e) {
    std::cerr << config << ": " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
}
