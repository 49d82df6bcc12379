// Scenario runner: mfg_extract <mode> --config <path|builtin> [--verify] [--out <path>] [--format csv|json]
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mfg/scenario.hpp"

#ifndef MFG_SCENARIO_DIR
#define MFG_SCENARIO_DIR "scenarios"
#endif

namespace {

std::string read_config(const std::string& ref) {
  namespace fs = std::filesystem;
  fs::path path(ref);
  if (!fs::exists(path)) {
    const fs::path builtin = fs::path(MFG_SCENARIO_DIR) / (ref + ".json");
    if (!fs::exists(builtin)) throw mfg::ConfigError("no config file or built-in scenario named '" + ref + "'");
    path = builtin;
  }
  std::ifstream in(path);
  if (!in) throw mfg::ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exhaustible-resource mean field game solver"};
  std::string mode;
  std::string config_ref;
  std::string out;
  std::string format;
  bool verify = false;
  app.add_option("mode", mode, "monopoly, infinite or finite")->required()->check(CLI::IsMember({"monopoly", "infinite", "finite"}));
  app.add_option("--config", config_ref, "scenario JSON file or built-in name (figure1, figure2, monopoly-demo)")->required();
  app.add_flag("--verify", verify, "run the discrete oracle and perturbation checks");
  app.add_option("--out", out, "output file (default: stdout)");
  app.add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  mfg::ScenarioResult result;
  std::string fmt;
  std::string path;
  try {
    mfg::ScenarioConfig config = mfg::parse_config(read_config(config_ref));
    if (mfg::to_string(config.mode) != mode) {
      throw mfg::ConfigError("config is for mode '" + std::string(mfg::to_string(config.mode)) + "', not '" + mode + "'");
    }
    config.verify = config.verify || verify;
    fmt = format.empty() ? config.format : format;
    path = out.empty() ? config.output_path : out;
    config.grid.n_steps = mfg::effective_steps(config.grid.n_steps);
    result = mfg::run_scenario(std::move(config));
  } catch (const mfg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  for (const auto& line : result.verify_log) std::cerr << "verify: " << line << '\n';
  for (const auto& f : result.failures) std::cerr << "invariant failed: " << f << '\n';
  if (!result.failures.empty()) return 1;

  const std::string bytes = mfg::emit(result.table, fmt);
  if (path.empty()) {
    std::cout << bytes;
  } else {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
      std::cerr << "error: cannot write " << path << '\n';
      return 1;
    }
    os << bytes;
  }
  return 0;
}
