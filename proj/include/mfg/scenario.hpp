#ifndef MFG_SCENARIO_HPP
#define MFG_SCENARIO_HPP

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mfg/best_response.hpp"
#include "mfg/distributions.hpp"
#include "mfg/equilibrium_finite.hpp"
#include "mfg/equilibrium_infinite.hpp"
#include "mfg/model.hpp"
#include "mfg/monopoly.hpp"
#include "mfg/oracle.hpp"

namespace mfg {

using ordered_json = nlohmann::ordered_json;

/// Malformed or inconsistent scenario description.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { Monopoly, Infinite, Finite };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::Monopoly: return "monopoly";
    case Mode::Infinite: return "infinite";
    case Mode::Finite: return "finite";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "monopoly") return Mode::Monopoly;
  if (s == "infinite") return Mode::Infinite;
  if (s == "finite") return Mode::Finite;
  throw ConfigError("unknown mode '" + s + "'");
}

struct ScenarioConfig {
  std::string name;
  Mode mode = Mode::Infinite;
  ModelParams params;
  std::optional<InitialDistribution> distribution;
  double x0 = 0.0;  // monopoly
  std::vector<double> players;
  GridOptions grid;
  bool verify = false;
  std::string output_path;
  std::string format = "csv";
};

namespace detail {

template <class T>
T required(const ordered_json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + ": bad value for '" + key + "'");
  }
}

inline InitialDistribution parse_distribution(const ordered_json& j) {
  const auto type = required<std::string>(j, "type", "distribution");
  try {
    if (type == "atoms") {
      std::vector<Atom> atoms;
      for (const auto& a : j.at("atoms")) {
        if (!a.is_array() || a.size() != 2) throw ConfigError("distribution: atoms are [location, probability]");
        atoms.push_back({a[0].get<double>(), a[1].get<double>()});
      }
      return Atoms(std::move(atoms));
    }
    if (type == "point_mass") return InitialDistribution::point_mass(required<double>(j, "x0", "distribution"));
    if (type == "exponential") return Exponential(required<double>(j, "lambda", "distribution"));
    if (type == "table") {
      return DensityTable(required<std::vector<double>>(j, "x", "distribution"),
                          required<std::vector<double>>(j, "density", "distribution"));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("distribution: ") + e.what());
  }
  throw ConfigError("distribution: unknown type '" + type + "'");
}

}  // namespace detail

inline ScenarioConfig parse_config(const ordered_json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ScenarioConfig c;
  c.name = j.value("name", "");
  c.mode = parse_mode(detail::required<std::string>(j, "mode", "config"));
  const auto& p = j.contains("params") ? j.at("params") : throw ConfigError("config: missing 'params'");
  const double r = detail::required<double>(p, "r", "params");
  const double eps = p.value("epsilon", 0.0);
  try {
    Horizon h = Horizon::infinite();
    if (p.contains("T") && !p.at("T").is_null()) h = Horizon::finite(p.at("T").get<double>());
    c.params = ModelParams(r, eps, h);
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("params: ") + e.what());
  }
  if (c.mode == Mode::Finite && !c.params.horizon.is_finite()) throw ConfigError("finite mode needs params.T");
  if (c.mode == Mode::Infinite && c.params.horizon.is_finite()) throw ConfigError("infinite mode must not set params.T");
  if (c.mode == Mode::Monopoly) {
    c.x0 = detail::required<double>(j, "x0", "config");
    if (!(c.x0 >= 0.0) || !std::isfinite(c.x0)) throw ConfigError("x0 must be finite and >= 0");
  } else {
    if (!j.contains("distribution")) throw ConfigError("config: missing 'distribution'");
    c.distribution = detail::parse_distribution(j.at("distribution"));
  }
  if (j.contains("players")) c.players = detail::required<std::vector<double>>(j, "players", "config");
  for (double x : c.players) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("players: reserves must be finite and >= 0");
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    if (g.contains("n_steps")) c.grid.n_steps = detail::required<std::size_t>(g, "n_steps", "grid");
    if (g.contains("truncation") && !g.at("truncation").is_null()) {
      c.grid.truncation = detail::required<double>(g, "truncation", "grid");
      if (!(*c.grid.truncation > 0.0)) throw ConfigError("grid: truncation must be positive");
    }
  }
  if (c.grid.n_steps < 100) throw ConfigError("grid: n_steps must be >= 100");
  c.verify = j.value("verify", false);
  if (j.contains("output")) {
    const auto& o = j.at("output");
    c.output_path = o.value("path", "");
    c.format = o.value("format", "csv");
  }
  if (c.format != "csv" && c.format != "json") throw ConfigError("output: format must be csv or json");
  return c;
}

inline ScenarioConfig parse_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Columns t, Q, then q(x0) and X(x0) per player, plus ordered metadata.
struct TrajectoryTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> data;  // one vector per column
  ordered_json metadata = ordered_json::object();

  std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }

  void add_column(std::string name, std::vector<double> values) {
    if (!data.empty() && values.size() != rows()) throw std::invalid_argument("TrajectoryTable: column length mismatch");
    columns.push_back(std::move(name));
    data.push_back(std::move(values));
  }

  void validate() const {
    if (columns.size() != data.size()) throw std::logic_error("TrajectoryTable: header/data mismatch");
    for (const auto& c : data) {
      if (c.size() != rows()) throw std::logic_error("TrajectoryTable: ragged columns");
    }
    if (!data.empty()) {
      const auto& t = data.front();
      for (std::size_t i = 1; i < t.size(); ++i) {
        if (!(t[i] > t[i - 1])) throw std::logic_error("TrajectoryTable: t must increase strictly");
      }
    }
  }
};

inline std::string format_number(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

/// CSV with metadata as leading "# key: json" comment lines, CRLF-free.
inline std::string emit_csv(const TrajectoryTable& table) {
  table.validate();
  std::ostringstream os;
  for (const auto& [key, value] : table.metadata.items()) os << "# " << key << ": " << value.dump() << '\n';
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    os << (c ? "," : "") << detail::csv_field(table.columns[c]);
  }
  os << '\n';
  for (std::size_t i = 0; i < table.rows(); ++i) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) os << (c ? "," : "") << format_number(table.data[c][i]);
    os << '\n';
  }
  return os.str();
}

inline std::string emit_json(const TrajectoryTable& table) {
  table.validate();
  ordered_json j;
  j["metadata"] = table.metadata;
  j["columns"] = table.columns;
  ordered_json data = ordered_json::object();
  for (std::size_t c = 0; c < table.columns.size(); ++c) data[table.columns[c]] = table.data[c];
  j["data"] = std::move(data);
  return j.dump(2) + "\n";
}

inline std::string emit(const TrajectoryTable& table, const std::string& format) {
  if (format == "csv") return emit_csv(table);
  if (format == "json") return emit_json(table);
  throw std::invalid_argument("emit: unknown format " + format);
}

inline TrajectoryTable parse_csv(const std::string& text) {
  TrajectoryTable table;
  std::istringstream is(text);
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header && line.rfind("# ", 0) == 0) {
      const auto sep = line.find(": ", 2);
      if (sep == std::string::npos) throw std::runtime_error("parse_csv: bad metadata line");
      table.metadata[line.substr(2, sep - 2)] = ordered_json::parse(line.substr(sep + 2));
      continue;
    }
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (!header) {
      table.columns = std::move(fields);
      table.data.assign(table.columns.size(), {});
      header = true;
      continue;
    }
    if (fields.size() != table.columns.size()) throw std::runtime_error("parse_csv: row width mismatch");
    for (std::size_t c = 0; c < fields.size(); ++c) table.data[c].push_back(std::stod(fields[c]));
  }
  return table;
}

struct ScenarioResult {
  TrajectoryTable table;
  std::vector<std::string> failures;  // invariant checks that did not hold
  std::vector<std::string> verify_log;
};

namespace detail {

inline std::string player_label(const char* prefix, double x0) {
  return std::string(prefix) + "(" + format_number(x0) + ")";
}

inline void check(ScenarioResult& res, bool ok, const std::string& what) {
  if (!ok) res.failures.push_back(what);
}

inline ordered_json params_json(const ModelParams& p) {
  ordered_json j;
  j["r"] = p.r;
  j["epsilon"] = p.epsilon;
  j["T"] = p.horizon.is_finite() ? ordered_json(p.horizon.end()) : ordered_json(nullptr);
  return j;
}

inline ScenarioResult run_monopoly(const ScenarioConfig& c) {
  ScenarioResult res;
  const auto sol = solve_monopoly(c.x0, c.params);
  // nothing to extract: one row at t = 0
  const ControlPath q = c.x0 > 0.0 ? monopoly_control(c.x0, c.params, c.grid.n_steps)
                                   : ControlPath(TimeGrid(std::vector<double>{0.0}), {0.0}, 0.0);
  const double u = monopoly_value(c.x0, c.params);
  auto& t = res.table;
  std::vector<double> times(q.grid().nodes().begin(), q.grid().nodes().end());
  std::vector<double> rate(q.values().begin(), q.values().end());
  std::vector<double> reserve(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) reserve[k] = c.x0 - sol.extracted(times[k]);
  t.metadata["mode"] = "monopoly";
  if (!c.name.empty()) t.metadata["scenario"] = c.name;
  t.metadata["params"] = params_json(c.params);
  t.metadata["x0"] = c.x0;
  t.metadata["regime"] = to_string(sol.regime);
  t.metadata["tau"] = sol.tau ? ordered_json(*sol.tau) : ordered_json(nullptr);
  t.metadata["u"] = u;
  t.add_column("t", times);
  t.add_column("Q", std::vector<double>(times.size(), 0.0));
  t.add_column(player_label("q", c.x0), rate);
  t.add_column(player_label("X", c.x0), reserve);

  double lowest = kInfinity;
  for (double x : reserve) lowest = std::min(lowest, x);
  check(res, lowest >= -1e-9 * std::max(1.0, c.x0), "reserve stays nonnegative");
  check(res, u >= 0.0 && std::isfinite(u), "value is finite and nonnegative");
  if (sol.regime == MonopolyRegime::EarlyExhaustion) {
    check(res, std::abs(reserve.back()) <= 1e-9 * std::max(1.0, c.x0), "reserve is exhausted at tau");
  }
  if (c.verify && c.x0 > 0.0) {
    const double end = c.params.horizon.is_finite() ? c.params.horizon.end() : 1.5 * *sol.tau;
    const auto problem = discretize(ProductionPath(), c.params, c.x0, 10000, end);
    const double gap = oracle_value_gap(u, problem);
    // finer than the table: the trapezoid mass deficit of the sampled control is O(h^2)
    const double pert = perturbation_test(monopoly_control(c.x0, c.params, 10 * c.grid.n_steps, end),
                                          ProductionPath(), c.params, 1000);
    res.verify_log.push_back("oracle gap " + format_number(gap));
    res.verify_log.push_back("perturbation worst gap " + format_number(pert));
    t.metadata["verify"] = {{"oracle_gap", gap}, {"perturbation_worst_gap", pert}};
    check(res, std::abs(gap) <= 1e-3, "oracle gap within 1e-3");
    check(res, pert >= -1e-8, "no perturbation improves the payoff");
  }
  return res;
}

inline ScenarioResult run_equilibrium(const ScenarioConfig& c) {
  ScenarioResult res;
  const auto& mu = *c.distribution;
  const EquilibriumSolution sol = c.mode == Mode::Finite ? equilibrium_finite(mu, c.params, c.grid, c.players)
                                                         : equilibrium_infinite(mu, c.params, c.grid, c.players);
  auto& t = res.table;
  t.metadata["mode"] = to_string(c.mode);
  if (!c.name.empty()) t.metadata["scenario"] = c.name;
  t.metadata["params"] = params_json(c.params);
  t.metadata["grid_end"] = sol.grid.back();
  t.metadata["nodes"] = sol.grid.size();
  if (c.mode == Mode::Finite) t.metadata["Q_T"] = sol.terminal_Q;
  ordered_json taus = ordered_json::array();
  for (const auto& p : sol.players) {
    ordered_json e;
    e["x0"] = p.x0;
    e["tau"] = p.tau ? ordered_json(*p.tau) : ordered_json(nullptr);
    if (c.mode == Mode::Finite) e["regime"] = to_string(p.regime);
    taus.push_back(std::move(e));
  }
  t.metadata["players"] = std::move(taus);
  const auto& d = sol.diagnostics;
  ordered_json diag;
  diag["fixed_point_residual"] = d.fixed_point_residual;
  diag["compatibility_margin"] = d.compatibility_margin;
  diag["identity_residual"] = d.identity_residual;
  diag["bound_excess"] = d.bound_excess;
  diag["monotonicity_violation"] = d.monotonicity_violation;
  diag["xi_ode_deviation"] = d.xi_ode_deviation;
  if (c.mode == Mode::Finite) diag["gamma_residual"] = d.gamma_residual;
  t.metadata["diagnostics"] = std::move(diag);

  t.add_column("t", std::vector<double>(sol.grid.nodes().begin(), sol.grid.nodes().end()));
  t.add_column("Q", std::vector<double>(sol.Q_star.values().begin(), sol.Q_star.values().end()));
  for (const auto& p : sol.players) {
    t.add_column(player_label("q", p.x0), p.rate);
    t.add_column(player_label("X", p.x0), p.reserve);
  }

  double q_max = 0.0;
  for (double q : sol.Q_star.values()) q_max = std::max(q_max, q);
  check(res, q_max <= c.params.max_aggregate() + 1e-12, "Q* <= 1/(2+eps)");
  check(res, d.bound_excess <= 1e-9, "Q* <= S(xi*)/(2+eps S(xi*))");
  check(res, d.compatibility_margin > 0.0, "Q* is compatible");
  check(res, d.identity_residual <= 1e-6, "compatibility identity holds to 1e-6");
  check(res, d.fixed_point_residual <= 1e-6, "fixed-point residual <= 1e-6");
  check(res, d.xi_ode_deviation <= 1e-8, "xi* agrees with the ODE to 1e-8");
  if (c.mode == Mode::Infinite) check(res, d.monotonicity_violation <= 1e-9, "Q* is nonincreasing");
  if (c.mode == Mode::Finite) check(res, d.gamma_residual <= 1e-10, "terminal fixed point residual <= 1e-10");
  for (const auto& p : sol.players) {
    double lowest = kInfinity;
    for (double x : p.reserve) lowest = std::min(lowest, x);
    check(res, lowest >= -1e-9 * std::max(1.0, p.x0), "reserve of " + format_number(p.x0) + " stays nonnegative");
  }

  if (c.verify) {
    // perturbations run on a finer solve: the trapezoid mass deficit of a sampled control is O(h^2)
    GridOptions fine = c.grid;
    fine.n_steps *= 10;
    const EquilibriumSolution ref = c.mode == Mode::Finite
                                        ? equilibrium_finite(mu, c.params, fine, c.players, false, false)
                                        : equilibrium_infinite(mu, c.params, fine, c.players, false, false);
    ordered_json v = ordered_json::array();
    for (std::size_t i = 0; i < sol.players.size(); ++i) {
      const auto& p = sol.players[i];
      if (p.x0 == 0.0) continue;
      const double end = sol.grid.back();
      const double j_star = payoff(p.control, sol.Q_star, c.params);
      const double gap = oracle_value_gap(j_star, discretize(sol.Q_star, c.params, p.x0, 10000, end));
      const double pert = perturbation_test(ref.players[i].control, ref.Q_star, c.params, 1000);
      res.verify_log.push_back("x0 " + format_number(p.x0) + ": oracle gap " + format_number(gap) +
                               ", perturbation worst gap " + format_number(pert));
      v.push_back({{"x0", p.x0}, {"oracle_gap", gap}, {"perturbation_worst_gap", pert}});
      check(res, std::abs(gap) <= 1e-3, "oracle gap within 1e-3 for " + format_number(p.x0));
      check(res, pert >= -1e-8, "no perturbation improves the payoff of " + format_number(p.x0));
    }
    t.metadata["verify"] = std::move(v);
  }
  return res;
}

}  // namespace detail

/// Number of grid steps after the MFG_GRID_STEPS override.
inline std::size_t effective_steps(std::size_t configured) {
  const char* env = std::getenv("MFG_GRID_STEPS");
  if (env == nullptr || *env == '\0') return configured;
  char* end = nullptr;
  const long long v = std::strtoll(env, &end, 10);
  if (*end != '\0' || v < 100) throw ConfigError("MFG_GRID_STEPS must be an integer >= 100");
  return static_cast<std::size_t>(v);
}

inline ScenarioResult run_scenario(ScenarioConfig config) {
  config.grid.n_steps = effective_steps(config.grid.n_steps);
  ScenarioResult res = config.mode == Mode::Monopoly ? detail::run_monopoly(config) : detail::run_equilibrium(config);
  res.table.validate();
  return res;
}

}  // namespace mfg

#endif  // MFG_SCENARIO_HPP
