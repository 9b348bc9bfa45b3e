#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "io.hpp"

namespace reflectar {

/// Exit codes of the command line front end.
enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_nonconvergence = 3, exit_compare_fail = 4 };

/// A solved or simulated run in the shared result shape.
struct RunResult {
  std::vector<std::pair<double, cplx>> grid;
  std::map<std::string, double> scalars;  ///< P0, EW and model-specific extras
  std::vector<cplx> constants;
  Diagnostics diagnostics;
  std::vector<std::string> warnings;
};

struct SimResult {
  std::vector<std::pair<double, SimEstimate>> grid;
  std::map<std::string, SimEstimate> scalars;
  std::vector<std::string> warnings;
};

struct CheckResult {
  std::string name;
  bool pass;
  double value;
};

struct CompareRow {
  std::string point;  ///< grid value or scalar name
  cplx analytic, simulated;
  double std_error, z;
};

struct ComparisonReport {
  std::vector<CompareRow> rows;
  std::vector<CheckResult> checks;
  double z_limit = 3.0;
  bool pass = false;
};

inline RunResult solve_run(const RunConfig& c) {
  RunResult r;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ModelSpec>) {
          PerfMetrics pm = std::holds_alternative<SystemTime>(m)
                               ? solve_system_time(std::get<SystemTime>(m), c.solver, c.s_grid, c.method)
                               : solve_model(m, c.solver, c.s_grid);
          r.grid = pm.grid;
          r.scalars["P0"] = pm.P0 + c.corrupt_constant;
          r.scalars["EW"] = pm.EW;
          r.constants = pm.transform.constants;
          r.diagnostics = pm.transform.diagnostics;
          r.warnings = pm.warnings;
        } else if constexpr (std::is_same_v<T, OrbitSpec>) {
          const PgfSolution s = solve_orbit_pgf(m, c.solver);
          for (double z : c.s_grid) r.grid.emplace_back(z, s.eval(z));
          r.scalars["P0"] = s.f0 + c.corrupt_constant;
          r.scalars["EW"] = s.means.at(0);
          r.scalars["S0"] = s.S0;
          r.constants = {s.f0 + c.corrupt_constant, s.S0};
          r.diagnostics = s.diagnostics;
        } else if constexpr (std::is_same_v<T, PrioritySpec>) {
          const PgfSolution s = solve_priority(m, c.solver);
          for (double z : c.s_grid) r.grid.emplace_back(z, s.eval(z));
          r.scalars["P0"] = s.f0 + c.corrupt_constant;
          r.scalars["EX1"] = s.means.at(0);
          r.scalars["EW"] = s.means.at(1);
          r.scalars["S0"] = s.S0;
          r.constants = {s.S0};
          r.diagnostics = s.diagnostics;
        } else {
          throw ConfigError("model.tag", "Raw models have no analytic solver; use simulate");
        }
      },
      c.model);
  return r;
}

inline SimResult simulate_run(const RunConfig& c) {
  SimResult r;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ModelSpec> || std::is_same_v<T, RawSpec>) {
          const WaitingEstimate e = sim_waiting(m, c.sim);
          r.grid = e.Z;
          r.scalars["P0"] = e.P0;
          r.scalars["EW"] = e.EW;
          r.warnings = e.warnings;
        } else if constexpr (std::is_same_v<T, OrbitSpec>) {
          const OrbitEstimate e = sim_orbit(m, c.sim);
          r.grid = e.f;
          r.scalars["P0"] = e.empty;
          r.scalars["EW"] = e.mean;
          r.scalars["S0"] = e.S0;
          r.warnings = e.warnings;
        } else {
          const PriorityEstimate e = sim_priority(m, c.sim);
          r.grid = e.F0;
          r.scalars["P0"] = e.F00;
          r.scalars["EX1"] = e.EX1;
          r.scalars["EW"] = e.EX2;
          r.scalars["S0"] = e.S0;
          r.warnings = e.warnings;
        }
      },
      c.model);
  return r;
}

namespace detail {

inline double z_score(cplx a, const SimEstimate& e) {
  const double d = std::abs(a - e.mean);
  if (e.std_error > 0.0) return d / e.std_error;
  return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

/// Properties every stationary transform or pgf must have, checked on the values at hand.
inline std::vector<CheckResult> invariant_checks(const RunConfig& c, const std::vector<std::pair<double, cplx>>& grid,
                                                 double P0, std::optional<cplx> at_unit) {
  std::vector<CheckResult> out;
  if (at_unit) {
    const double e = std::abs(*at_unit - 1.0);
    out.push_back({is_pgf_model(c.model) ? "normalization f(1)=1" : "normalization Z(0)=1", e <= 1e-8, e});
  }
  out.push_back({"P0 in [0,1]", P0 >= -1e-12 && P0 <= 1.0 + 1e-12, P0});
  auto sorted = grid;
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.first < b.first; });
  double worst = 0.0;
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    const double step = sorted[k].second.real() - sorted[k - 1].second.real();
    // transforms decrease in s; pgfs increase in z
    worst = std::max(worst, is_pgf_model(c.model) ? -step : step);
  }
  out.push_back({"monotone on grid", worst <= 1e-12, worst});
  double range = 0.0;
  for (const auto& [s, v] : grid)
    if (s >= 0.0) range = std::max({range, -v.real(), v.real() - 1.0});
  out.push_back({"grid values in [0,1]", range <= 1e-12, range});
  return out;
}

}  // namespace detail

/// Solves (when an analytic route exists) and simulates, then scores each grid point and scalar.
inline ComparisonReport compare_run(const RunConfig& c) {
  ComparisonReport rep;
  const SimResult sim = simulate_run(c);
  if (std::holds_alternative<RawSpec>(c.model)) {
    // simulation is the only oracle here, so only invariants are checked
    std::vector<std::pair<double, cplx>> g;
    for (const auto& [s, e] : sim.grid) g.emplace_back(s, e.mean);
    rep.checks = detail::invariant_checks(c, g, sim.scalars.at("P0").mean.real(), std::nullopt);
  } else {
    const RunResult an = solve_run(c);
    for (std::size_t k = 0; k < an.grid.size(); ++k) {
      const SimEstimate& e = sim.grid[k].second;
      std::ostringstream p;
      p.precision(17);
      p << an.grid[k].first;
      rep.rows.push_back({p.str(), an.grid[k].second, e.mean, e.std_error, detail::z_score(an.grid[k].second, e)});
    }
    for (const auto& [name, v] : an.scalars) {
      const SimEstimate& e = sim.scalars.at(name);
      rep.rows.push_back({name, v, e.mean, e.std_error, detail::z_score(v, e)});
    }
    std::optional<cplx> unit;
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, ModelSpec>) {
            RunConfig c0 = c;
            c0.s_grid = {0.0};
            unit = solve_run(c0).grid.at(0).second;
          } else if constexpr (std::is_same_v<T, OrbitSpec> || std::is_same_v<T, PrioritySpec>) {
            RunConfig c1 = c;
            c1.s_grid = {1.0};
            unit = solve_run(c1).grid.at(0).second;
          }
        },
        c.model);
    rep.checks = detail::invariant_checks(c, an.grid, an.scalars.at("P0"), unit);
  }
  rep.pass = true;
  for (const auto& r : rep.rows) rep.pass = rep.pass && r.z <= rep.z_limit;
  for (const auto& k : rep.checks) rep.pass = rep.pass && k.pass;
  return rep;
}

// ---- serialization

inline json to_json(const RunResult& r) {
  json extra = json::object();
  for (const auto& [k, v] : r.scalars)
    if (k != "P0" && k != "EW") extra[k] = v;
  return result_json(r.grid, r.scalars.at("P0"), r.scalars.at("EW"), r.constants, r.diagnostics, r.warnings, extra);
}

inline std::vector<CsvRow> to_rows(const RunResult& r) {
  std::vector<CsvRow> rows;
  for (const auto& [s, v] : r.grid) rows.push_back({s, v, "analytic", std::nullopt});
  return rows;
}

inline json to_json(const SimResult& r) {
  json j;
  j["Z_grid"] = json::array();
  for (const auto& [s, e] : r.grid) j["Z_grid"].push_back({s, e.mean.real(), e.mean.imag(), e.std_error});
  for (const auto& [k, e] : r.scalars) j[k] = estimate_json(e);
  j["warnings"] = r.warnings;
  return j;
}

inline std::vector<CsvRow> to_rows(const SimResult& r) {
  std::vector<CsvRow> rows;
  for (const auto& [s, e] : r.grid) rows.push_back({s, e.mean, "sim", e.std_error});
  return rows;
}

inline json to_json(const ComparisonReport& r) {
  json j;
  j["rows"] = json::array();
  for (const auto& x : r.rows)
    j["rows"].push_back({{"point", x.point}, {"analytic", cjson(x.analytic)}, {"simulated", cjson(x.simulated)},
                         {"stderr", x.std_error}, {"z", std::isfinite(x.z) ? json(x.z) : json("inf")}});
  j["checks"] = json::array();
  for (const auto& k : r.checks) j["checks"].push_back({{"name", k.name}, {"pass", k.pass}, {"value", k.value}});
  j["policy"] = {{"max_abs_z", r.z_limit}, {"invariants", "all must pass"}};
  j["verdict"] = r.pass ? "pass" : "fail";
  return j;
}

inline std::vector<CsvRow> to_rows(const ComparisonReport& r) {
  std::vector<CsvRow> rows;
  for (const auto& x : r.rows) {
    char* end = nullptr;
    const double p = std::strtod(x.point.c_str(), &end);
    if (end == x.point.c_str() || *end != '\0') continue;  // scalars live in the JSON report
    rows.push_back({p, x.analytic, "analytic", std::nullopt});
    rows.push_back({p, x.simulated, "sim", x.std_error});
  }
  return rows;
}

inline bool wants(const RunConfig& c, const std::string& fmt) {
  return std::find(c.outputs.formats.begin(), c.outputs.formats.end(), fmt) != c.outputs.formats.end();
}

/// Writes `<stem>.json` and `<stem>.csv` according to outputs.formats.
inline void emit(const RunConfig& c, const std::string& stem, const json& j, const std::vector<CsvRow>& rows) {
  const std::filesystem::path dir = c.outputs.dir;
  if (wants(c, "json")) write_atomic(dir / (stem + ".json"), j.dump(2) + "\n");
  if (wants(c, "csv")) write_atomic(dir / (stem + ".csv"), to_csv(rows));
}

// ---- sweep

struct SweepRow {
  double param;
  std::string metric;
  double value;
};

/// Replaces the numeric field at `path` (dotted, relative to model.params) in a copy of the config.
inline json with_param(json config, const std::string& path, double v) {
  const std::string full = "model.params." + path;
  if (!config.contains("model") || !config["model"].is_object() || !config["model"].contains("params"))
    throw ConfigError("model.params", "missing");
  json* node = &config["model"]["params"];
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (node->is_array()) {
      char* end = nullptr;
      const long idx = std::strtol(part.c_str(), &end, 10);
      if (end == part.c_str() || *end != '\0' || idx < 0 || std::size_t(idx) >= node->size())
        throw ConfigError(full, "no such field");
      node = &(*node)[std::size_t(idx)];
    } else if (node->is_object() && node->contains(part)) {
      node = &(*node)[part];
    } else {
      throw ConfigError(full, "no such field");
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!node->is_number()) throw ConfigError(full, "not a numeric field");
  *node = v;
  return config;
}

/// One solve per value; long rows (value, metric, value) plus forward differences of P0 and EW.
inline std::vector<SweepRow> sweep_run(const json& config, const std::string& path, const std::vector<double>& values,
                                       const std::function<void(RunConfig&)>& adjust = {}) {
  if (values.empty()) throw ConfigError("values", "must not be empty");
  std::vector<SweepRow> rows;
  std::vector<RunResult> results;
  for (double v : values) {
    RunConfig c = parse_config(with_param(config, path, v));
    if (adjust) adjust(c);
    results.push_back(solve_run(c));
    for (const auto& [k, x] : results.back().scalars) rows.push_back({v, k, x});
  }
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double h = values[i] - values[i - 1];
    if (h == 0.0) continue;
    for (const char* k : {"P0", "EW"})
      rows.push_back({values[i], std::string("fd_") + k,
                      (results[i].scalars.at(k) - results[i - 1].scalars.at(k)) / h});
  }
  return rows;
}

inline std::string sweep_csv(const std::string& param, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << param << ",metric,value\n";
  for (const auto& r : rows) os << r.param << ',' << r.metric << ',' << r.value << '\n';
  return os.str();
}

// ---- expansion

inline json to_json(const ExpansionResult& e) {
  return {{"R", e.R}, {"base_moments", e.base_moments}, {"rho", e.rho}};
}

inline std::string expansion_csv(const ExpansionResult& e) {
  std::ostringstream os;
  os.precision(17);
  os << "moment,order,value\n";
  for (std::size_t l = 0; l < e.R.size(); ++l)
    for (std::size_t h = 0; h < e.R[l].size(); ++h) os << l << ',' << h << ',' << e.R[l][h] << '\n';
  return os.str();
}

}  // namespace reflectar
