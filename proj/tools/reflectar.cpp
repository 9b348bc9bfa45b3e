// Command line front end: solve, simulate, compare, sweep, expand.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "reflectar/run.hpp"

using namespace reflectar;

namespace {

struct Flags {
  std::string config, out, param;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> tolerance;
  std::vector<double> values;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
}

int env_threads() {
  const char* v = std::getenv("REFLECTAR_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("REFLECTAR_THREADS", "must be a positive integer");
  return int(n);
}

/// Command line flags win over the environment, which wins over the config file.
void apply(const Flags& f, RunConfig& c) {
  if (f.tolerance) {
    c.solver.tail_tol = *f.tolerance;
    try {
      validate(c.solver);
    } catch (const ConfigError&) {
      throw ConfigError("--tolerance", "must lie in (0, 1e-3]");
    }
  }
  if (f.seed) c.sim.seed = *f.seed;
  if (f.threads)
    c.sim.threads = *f.threads;
  else if (int t = env_threads())
    c.sim.threads = t;
  if (c.sim.threads < 1) throw ConfigError("--threads", "must be >= 1");
  if (!f.out.empty()) c.outputs.dir = f.out;
}

int run(const std::string& cmd, const Flags& f) {
  const json raw = read_json(f.config);
  if (cmd == "sweep") {
    if (f.param.empty()) throw ConfigError("--param", "required for sweep");
    RunConfig base = parse_config(raw);
    apply(f, base);
    const auto rows = sweep_run(raw, f.param, f.values, [&](RunConfig& c) { apply(f, c); });
    write_atomic(std::filesystem::path(base.outputs.dir) / "sweep.csv", sweep_csv(f.param, rows));
    std::cout << "sweep: " << rows.size() << " rows\n";
    return exit_ok;
  }
  RunConfig c = parse_config(raw);
  apply(f, c);
  if (cmd == "solve") {
    const RunResult r = solve_run(c);
    emit(c, "result", to_json(r), to_rows(r));
    std::cout << "P0 = " << r.scalars.at("P0") << "  EW = " << r.scalars.at("EW") << '\n';
  } else if (cmd == "simulate") {
    const SimResult r = simulate_run(c);
    emit(c, "sim", to_json(r), to_rows(r));
    std::cout << "P0 = " << r.scalars.at("P0").mean.real() << "  EW = " << r.scalars.at("EW").mean.real() << '\n';
  } else if (cmd == "compare") {
    const ComparisonReport r = compare_run(c);
    emit(c, "compare", to_json(r), to_rows(r));
    std::cout << "verdict: " << (r.pass ? "pass" : "fail") << '\n';
    return r.pass ? exit_ok : exit_compare_fail;
  } else if (cmd == "expand") {
    const auto* m = std::get_if<ModelSpec>(&c.model);
    if (!m || !std::holds_alternative<SystemTime>(*m))
      throw ConfigError("model.tag", "expand needs a SystemTime model, got '" + c.tag + "'");
    const ExpansionResult e = expansion_coeffs(std::get<SystemTime>(*m), c.expansion_moments, c.expansion_order);
    const std::filesystem::path dir = c.outputs.dir;
    if (wants(c, "json")) write_atomic(dir / "expand.json", to_json(e).dump(2) + "\n");
    if (wants(c, "csv")) write_atomic(dir / "expand.csv", expansion_csv(e));
    std::cout << "rho = " << e.rho << '\n';
  }
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reflected autoregressive queues: transforms, atoms and means, checked by simulation"};
  app.require_subcommand(1);
  Flags f;
  for (const char* name : {"solve", "simulate", "compare", "sweep", "expand"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", f.config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", f.out, "output directory (overrides outputs.dir)");
    sub->add_option("--seed", f.seed, "simulation seed");
    sub->add_option("--threads", f.threads, "simulation threads (fallback: REFLECTAR_THREADS)");
    sub->add_option("--tolerance", f.tolerance, "solver tail tolerance");
    if (std::string(name) == "sweep") {
      sub->add_option("--param", f.param, "dotted path inside model.params")->required();
      sub->add_option("--values", f.values, "values to sweep")->required()->delimiter(',');
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? exit_ok : exit_config;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_config;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return run(cmd, f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const UnsupportedError& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return exit_config;
  } catch (const DegenerateError& e) {
    std::cerr << "degenerate model: " << e.what() << '\n';
    return exit_config;
  } catch (const Error& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return exit_nonconvergence;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "output error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_nonconvergence;
  }
}
