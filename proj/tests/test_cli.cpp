#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "reflectar/run.hpp"

using namespace reflectar;
namespace fs = std::filesystem;

namespace {

const json prop_model = json::parse(R"({"tag":"PropService","params":{
  "a":0.5,
  "B":{"tag":"Exponential","params":{"rate":1}},
  "G":{"values":[0.5],"probs":[1]},
  "J":{"tag":"Exponential","params":{"rate":1}}}})");

const json system_time_model = json::parse(R"({"tag":"SystemTime","params":{
  "delta":0.5,
  "B":{"tag":"Exponential","params":{"rate":1}},
  "G":{"values":[0.4],"probs":[1]},
  "eps":0.0}})");

const json orbit_model = json::parse(R"({"tag":"Orbit","params":{
  "lambda0":1,"lambda1":1,"alpha0":2,"alpha1":1.5,
  "C":{"tag":"PoissonDuringService","params":{"rate":0.6,"service":{"tag":"Exponential","params":{"rate":1}}}},
  "G":{"tag":"PoissonDuringService","params":{"rate":0.4,"service":{"tag":"Exponential","params":{"rate":1}}}},
  "xi":{"values":[0.5,0.8],"probs":[0.4,0.6]}}})");

json small_sim() { return {{"replications", 16}, {"horizon", 20000}, {"burn_in", 2000}, {"seed", 11}}; }

/// Scratch directory per test, recreated empty.
fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("reflectar_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

struct Run {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Run cli(const fs::path& dir, const json& config, const std::string& args, const std::string& env = "") {
  const fs::path cfg = dir / "config.json";
  std::ofstream(cfg) << config.dump(2);
  const std::string cmd = env + " \"" REFLECTAR_CLI "\" " + args + " --config \"" + cfg.string() + "\" > \"" +
                          (dir / "stdout.txt").string() + "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
  const int st = std::system(cmd.c_str());
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(dir / "stdout.txt"), slurp(dir / "stderr.txt")};
}

json with_out(json c, const fs::path& dir) {
  c["outputs"] = {{"dir", (dir / "out").string()}};
  return c;
}

/// metric -> values in file order, from the long sweep CSV
std::map<std::string, std::vector<std::pair<double, double>>> read_sweep(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::vector<std::pair<double, double>>> m;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string x, k, v;
    std::getline(ss, x, ',');
    std::getline(ss, k, ',');
    std::getline(ss, v, ',');
    m[k].emplace_back(std::strtod(x.c_str(), nullptr), std::strtod(v.c_str(), nullptr));
  }
  return m;
}

}  // namespace

TEST_CASE("solve writes the result schema", "[cli]") {
  const fs::path d = scratch("solve");
  const json cfg = with_out({{"model", prop_model}}, d);
  const Run r = cli(d, cfg, "solve");
  REQUIRE(r.code == exit_ok);
  const json j = json::parse(slurp(d / "out" / "result.json"));
  for (const char* k : {"Z_grid", "P0", "EW", "constants", "diagnostics"}) CHECK(j.contains(k));
  const std::string csv = slurp(d / "out" / "result.csv");
  CHECK(csv.rfind("point,re_value,im_value,source,stderr\n", 0) == 0);
  CHECK(csv.find(",analytic,") != std::string::npos);
  for (const auto& e : fs::directory_iterator(d / "out")) CHECK(e.path().extension() != ".tmp");

  SECTION("json re-parses to the in-memory metrics bit for bit") {
    const RunResult mem = solve_run(parse_config(cfg));
    CHECK(j["P0"].get<double>() == mem.scalars.at("P0"));
    CHECK(j["EW"].get<double>() == mem.scalars.at("EW"));
    REQUIRE(j["Z_grid"].size() == mem.grid.size());
    for (std::size_t k = 0; k < mem.grid.size(); ++k) {
      CHECK(j["Z_grid"][k][0].get<double>() == mem.grid[k].first);
      CHECK(j["Z_grid"][k][1].get<double>() == mem.grid[k].second.real());
      CHECK(j["Z_grid"][k][2].get<double>() == mem.grid[k].second.imag());
    }
    const json again = json::parse(to_json(mem).dump());
    CHECK(again == to_json(mem));
  }
}

TEST_CASE("retrial models solve through the same front end", "[cli]") {
  const fs::path d = scratch("orbit");
  REQUIRE(cli(d, with_out({{"model", orbit_model}}, d), "solve").code == exit_ok);
  const json j = json::parse(slurp(d / "out" / "result.json"));
  CHECK(j["Z_grid"].size() == default_pgf_grid().size());
  CHECK(j["P0"].get<double>() > 0.0);
}

TEST_CASE("exit codes", "[cli]") {
  const fs::path d = scratch("codes");
  SECTION("unknown model tag names the tag") {
    json m = prop_model;
    m["tag"] = "Nope";
    const Run r = cli(d, with_out({{"model", m}}, d), "solve");
    CHECK(r.code == exit_config);
    CHECK(r.err.find("Nope") != std::string::npos);
  }
  SECTION("bad parameter names its key") {
    json m = prop_model;
    m["params"]["B"]["params"]["rate"] = -1.0;
    const Run r = cli(d, with_out({{"model", m}}, d), "solve");
    CHECK(r.code == exit_config);
    CHECK(r.err.find("model.params.B.params.rate") != std::string::npos);
  }
  SECTION("tail tolerance out of range") {
    const Run r = cli(d, with_out({{"model", prop_model}, {"solver", {{"tail_tol", 1e2}}}}, d), "solve");
    CHECK(r.code == exit_config);
    CHECK(r.err.find("solver.tail_tol") != std::string::npos);
    CHECK(cli(d, with_out({{"model", prop_model}}, d), "solve --tolerance 5").code == exit_config);
  }
  SECTION("empty grid") {
    CHECK(cli(d, with_out({{"model", prop_model}, {"solver", {{"s_grid", json::array()}}}}, d), "compare").code ==
          exit_config);
  }
  SECTION("unknown flag and unknown key") {
    CHECK(cli(d, with_out({{"model", prop_model}}, d), "solve --bogus").code == exit_config);
    CHECK(cli(d, with_out({{"model", prop_model}, {"extra", 1}}, d), "solve").code == exit_config);
  }
  SECTION("slow contraction is a solver failure") {
    json m = prop_model;
    m["params"]["a"] = 0.97;
    CHECK(cli(d, with_out({{"model", m}}, d), "solve").code == exit_nonconvergence);
  }
  SECTION("bad thread environment, overridden by the flag") {
    const json cfg = with_out({{"model", prop_model}, {"sim", small_sim()}}, d);
    CHECK(cli(d, cfg, "simulate", "REFLECTAR_THREADS=abc").code == exit_config);
    CHECK(cli(d, cfg, "simulate --threads 2", "REFLECTAR_THREADS=abc").code == exit_ok);
  }
}

TEST_CASE("compare detects a corrupted constant", "[cli][compare]") {
  const fs::path d = scratch("compare");
  json cfg = with_out({{"model", prop_model}, {"sim", small_sim()}}, d);
  const Run ok = cli(d, cfg, "compare");
  CHECK(ok.code == exit_ok);
  CHECK(json::parse(slurp(d / "out" / "compare.json"))["verdict"] == "pass");

  cfg["solver"] = {{"test_corrupt_constant", 0.05}};
  const Run bad = cli(d, cfg, "compare");
  CHECK(bad.code == exit_compare_fail);
  CHECK(json::parse(slurp(d / "out" / "compare.json"))["verdict"] == "fail");
}

TEST_CASE("compare output does not depend on the thread count", "[cli][compare]") {
  const fs::path d1 = scratch("det1"), d3 = scratch("det3");
  const json sim = small_sim();
  REQUIRE(cli(d1, with_out({{"model", orbit_model}, {"sim", sim}}, d1), "compare --threads 1").code == exit_ok);
  REQUIRE(cli(d3, with_out({{"model", orbit_model}, {"sim", sim}}, d3), "compare --threads 3").code == exit_ok);
  for (const char* f : {"compare.json", "compare.csv"}) {
    const std::string a = slurp(d1 / "out" / f), b = slurp(d3 / "out" / f);
    CHECK(!a.empty());
    CHECK(a == b);
  }
  const fs::path e = scratch("det_env");
  REQUIRE(cli(e, with_out({{"model", orbit_model}, {"sim", sim}}, e), "compare", "REFLECTAR_THREADS=2").code == exit_ok);
  CHECK(slurp(e / "out" / "compare.json") == slurp(d1 / "out" / "compare.json"));
}

TEST_CASE("sweep", "[cli][sweep]") {
  const fs::path d = scratch("sweep");
  SECTION("a over nine values, EW nondecreasing") {
    REQUIRE(cli(d, with_out({{"model", prop_model}}, d), "sweep --param a --values 0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
                .code == exit_ok);
    const auto m = read_sweep(d / "out" / "sweep.csv");
    REQUIRE(m.at("P0").size() == 9);
    REQUIRE(m.at("EW").size() == 9);
    for (std::size_t i = 1; i < 9; ++i) CHECK(m.at("EW")[i].second >= m.at("EW")[i - 1].second);
    CHECK(m.at("fd_EW").size() == 8);
  }
  SECTION("single value equals solve") {
    REQUIRE(cli(d, with_out({{"model", prop_model}}, d), "sweep --param a --values 0.5").code == exit_ok);
    const auto m = read_sweep(d / "out" / "sweep.csv");
    REQUIRE(cli(d, with_out({{"model", prop_model}}, d), "solve").code == exit_ok);
    const json j = json::parse(slurp(d / "out" / "result.json"));
    CHECK(m.at("P0").at(0).second == j["P0"].get<double>());
    CHECK(m.at("EW").at(0).second == j["EW"].get<double>());
  }
  SECTION("eps finite difference against the expansion") {
    const json cfg = with_out({{"model", system_time_model}}, d);
    REQUIRE(cli(d, cfg, "sweep --param eps --values 0,0.001").code == exit_ok);
    const double fd = read_sweep(d / "out" / "sweep.csv").at("fd_P0").at(0).second;
    REQUIRE(cli(d, cfg, "expand").code == exit_ok);
    const json e = json::parse(slurp(d / "out" / "expand.json"));
    CHECK(std::abs(fd - e["R"][0][1].get<double>()) < 5e-3);
  }
  SECTION("non-numeric target") {
    const Run r = cli(d, with_out({{"model", prop_model}}, d), "sweep --param G --values 0.1");
    CHECK(r.code == exit_config);
    CHECK(r.err.find("model.params.G") != std::string::npos);
    CHECK(cli(d, with_out({{"model", prop_model}}, d), "sweep --param nothing --values 0.1").code == exit_config);
  }
}

TEST_CASE("expand needs a system time model", "[cli]") {
  const fs::path d = scratch("expand");
  CHECK(cli(d, with_out({{"model", prop_model}}, d), "expand").code == exit_config);
  REQUIRE(cli(d, with_out({{"model", system_time_model}}, d), "expand").code == exit_ok);
  CHECK(slurp(d / "out" / "expand.csv").rfind("moment,order,value\n", 0) == 0);
}

TEST_CASE("simulation-only recursions are checked on invariants", "[cli]") {
  const fs::path d = scratch("raw");
  const json raw = json::parse(R"({"tag":"Raw","params":{
    "V":{"lo":0,"hi":1},
    "B":{"tag":"Exponential","params":{"rate":1}},
    "A":{"tag":"Exponential","params":{"rate":1.5}}}})");
  const json cfg = with_out({{"model", raw}, {"sim", small_sim()}}, d);
  const Run s = cli(d, cfg, "solve");
  CHECK(s.code == exit_config);
  CHECK(s.err.find("model.tag") != std::string::npos);
  REQUIRE(cli(d, cfg, "compare").code == exit_ok);
  const json j = json::parse(slurp(d / "out" / "compare.json"));
  CHECK(j["verdict"] == "pass");
}
