#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "mcsim.hpp"
#include "models.hpp"
#include "retrial.hpp"

namespace reflectar {

using json = nlohmann::json;

using RunModel = std::variant<ModelSpec, OrbitSpec, PrioritySpec, RawSpec>;

struct OutputSpec {
  std::string dir = ".";
  std::vector<std::string> formats{"csv", "json"};
};

struct RunConfig {
  std::string tag;
  RunModel model;
  SolveOptions solver;
  std::vector<double> s_grid = default_grid();
  SystemTimeMethod method = SystemTimeMethod::automatic;
  int expansion_moments = 2, expansion_order = 2;
  double corrupt_constant = 0.0;  ///< test hook for compare: added to the analytic atom
  SimConfig sim;
  OutputSpec outputs;
};

namespace io {

/// Reads typed fields from a JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "must be an object");
  }
  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  bool has(const std::string& k) const { return j_.contains(k); }
  const json& raw(const std::string& k) {
    used_.insert(k);
    if (!j_.contains(k)) throw ConfigError(key(k), "missing");
    return j_.at(k);
  }
  double num(const std::string& k, std::optional<double> dflt = std::nullopt) {
    if (!has(k)) {
      if (dflt) return *dflt;
      throw ConfigError(key(k), "missing");
    }
    const json& v = raw(k);
    if (v.is_string() && (v == "inf" || v == "infinity")) return std::numeric_limits<double>::infinity();
    if (!v.is_number()) throw ConfigError(key(k), "must be a number");
    return v.get<double>();
  }
  long integer(const std::string& k, long dflt) {
    if (!has(k)) return dflt;
    const json& v = raw(k);
    if (!v.is_number()) throw ConfigError(key(k), "must be a number");
    const double d = v.get<double>();
    if (d != std::floor(d)) throw ConfigError(key(k), "must be an integer");
    return long(d);
  }
  std::vector<double> nums(const std::string& k, std::optional<std::vector<double>> dflt = std::nullopt) {
    if (!has(k)) {
      if (dflt) return *dflt;
      throw ConfigError(key(k), "missing");
    }
    const json& v = raw(k);
    if (!v.is_array()) throw ConfigError(key(k), "must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(key(k), "must be an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  std::string str(const std::string& k, std::optional<std::string> dflt = std::nullopt) {
    if (!has(k)) {
      if (dflt) return *dflt;
      throw ConfigError(key(k), "missing");
    }
    const json& v = raw(k);
    if (!v.is_string()) throw ConfigError(key(k), "must be a string");
    return v.get<std::string>();
  }
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(key(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline std::pair<std::string, json> tagged(const json& j, const std::string& path) {
  Fields f(j, path);
  const std::string tag = f.str("tag");
  json params = f.has("params") ? f.raw("params") : json::object();
  f.done();
  return {tag, params};
}

inline Dist parse_dist(const json& j, const std::string& path) {
  const auto [tag, params] = tagged(j, path);
  Fields f(params, path + ".params");
  Dist d;
  if (tag == "Exponential") {
    d = Exponential{f.num("rate")};
  } else if (tag == "HyperExponential") {
    d = HyperExponential{f.nums("weights"), f.nums("rates")};
  } else if (tag == "Deterministic") {
    d = Deterministic{f.num("value")};
  } else if (tag == "RationalLST") {
    RationalLST r;
    r.num = f.nums("num");
    const json& poles = f.raw("poles");
    if (!poles.is_array()) throw ConfigError(path + ".params.poles", "must be an array");
    for (const auto& p : poles) {
      if (p.is_number())
        r.poles.emplace_back(p.get<double>(), 0.0);
      else if (p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number())
        r.poles.emplace_back(p[0].get<double>(), p[1].get<double>());
      else
        throw ConfigError(path + ".params.poles", "entries must be numbers or [re, im] pairs");
    }
    const std::string side = f.str("side", "left");
    if (side != "left" && side != "right") throw ConfigError(path + ".params.side", "must be left or right");
    r.side = side == "left" ? HalfPlane::left : HalfPlane::right;
    d = r;
  } else {
    throw ConfigError(path + ".tag", "unknown distribution tag '" + tag + "'");
  }
  f.done();
  validate(d, path + ".params");
  return d;
}

inline DiscreteMixture parse_mixture(const json& j, const std::string& path) {
  Fields f(j, path);
  DiscreteMixture m{f.nums("values"), f.nums("probs")};
  f.done();
  validate(m, path);
  return m;
}

inline PgfSpec parse_pgf(const json& j, const std::string& path) {
  const auto [tag, params] = tagged(j, path);
  Fields f(params, path + ".params");
  PgfSpec p;
  if (tag == "PoissonDuringService")
    p = PoissonDuringService{f.num("rate"), parse_dist(f.raw("service"), path + ".params.service")};
  else if (tag == "Polynomial")
    p = PolynomialPgf{f.nums("coeffs")};
  else
    throw ConfigError(path + ".tag", "unknown pgf tag '" + tag + "'");
  f.done();
  validate(p, path);
  return p;
}

inline JointPgfSpec parse_joint_pgf(const json& j, const std::string& path) {
  const auto [tag, params] = tagged(j, path);
  Fields f(params, path + ".params");
  JointPgfSpec p;
  if (tag == "JointPoissonService") {
    p = JointPoissonService{f.num("rate1"), f.num("rate2"), parse_dist(f.raw("service"), path + ".params.service")};
  } else if (tag == "JointPolynomial") {
    JointPolynomial jp;
    const json& c = f.raw("coeffs");
    if (!c.is_array()) throw ConfigError(path + ".params.coeffs", "must be an array of arrays");
    for (const auto& row : c) {
      if (!row.is_array()) throw ConfigError(path + ".params.coeffs", "must be an array of arrays");
      jp.coeffs.push_back(row.get<std::vector<double>>());
    }
    p = jp;
  } else {
    throw ConfigError(path + ".tag", "unknown joint pgf tag '" + tag + "'");
  }
  f.done();
  validate(p, path);
  return p;
}

inline PsiSpec parse_psi(const json& j, const std::string& path) {
  Fields f(j, path);
  PsiSpec p;
  const std::string kind = f.str("kind", "linear");
  if (kind == "linear")
    p.kind = PsiSpec::Kind::linear;
  else if (kind == "compound_poisson")
    p.kind = PsiSpec::Kind::compound_poisson;
  else
    throw ConfigError(path + ".kind", "must be linear or compound_poisson");
  p.coef = f.num("coef");
  if (f.has("H")) p.H = parse_dist(f.raw("H"), path + ".H");
  f.done();
  return p;
}

inline RunModel parse_model(const json& j, std::string& tag_out) {
  const auto [tag, params] = tagged(j, "model");
  tag_out = tag;
  const std::string P = "model.params";
  Fields f(params, P);
  auto dist = [&](const std::string& k) { return parse_dist(f.raw(k), P + "." + k); };
  auto mix = [&](const std::string& k) { return parse_mixture(f.raw(k), P + "." + k); };
  RunModel out;
  if (tag == "PropService") {
    out = ModelSpec{PropService{f.num("a"), dist("B"), mix("G"), dist("J")}};
  } else if (tag == "MixedDelay") {
    MixedDelay m{f.num("a"), mix("c"), f.num("p"), dist("B"), dist("Jplus"), dist("Jminus")};
    out = ModelSpec{m};
  } else if (tag == "SystemTime") {
    out = ModelSpec{SystemTime{f.num("delta"), dist("B"), mix("G"), f.num("eps")}};
  } else if (tag == "WaitDepService") {
    out = ModelSpec{WaitDepService{f.num("lambda"), f.num("mu"), mix("Omega")}};
  } else if (tag == "Threshold") {
    out = ModelSpec{Threshold{f.num("a0"), f.num("a1"), f.num("lambda0"), f.num("lambda1"), dist("B"), dist("T")}};
  } else if (tag == "GeneralDep") {
    GeneralDep g;
    g.a = f.num("a");
    g.B = dist("B");
    g.chi = dist("chi");
    g.psi.clear();
    const json& ps = f.raw("psi");
    if (!ps.is_array()) throw ConfigError(P + ".psi", "must be an array");
    for (std::size_t i = 0; i < ps.size(); ++i) g.psi.push_back(parse_psi(ps[i], P + ".psi[" + std::to_string(i) + "]"));
    g.probs = f.nums("probs");
    out = ModelSpec{g};
  } else if (tag == "Orbit") {
    OrbitSpec o;
    o.lambda0 = f.num("lambda0");
    o.lambda1 = f.num("lambda1");
    o.alpha0 = f.num("alpha0");
    o.alpha1 = f.num("alpha1");
    o.C = parse_pgf(f.raw("C"), P + ".C");
    o.G = parse_pgf(f.raw("G"), P + ".G");
    o.xi = mix("xi");
    for (auto [k, slot] : {std::pair{"C_o", &o.C_o}, {"C_p", &o.C_p}, {"G_o", &o.G_o}, {"G_p", &o.G_p}})
      if (f.has(k)) *slot = parse_pgf(f.raw(k), P + "." + k);
    out = o;
  } else if (tag == "Priority") {
    PrioritySpec p;
    p.lambda1 = f.num("lambda1");
    p.lambda2 = f.num("lambda2");
    p.alpha = f.num("alpha");
    p.A = parse_joint_pgf(f.raw("A"), P + ".A");
    p.xi = mix("xi");
    out = p;
  } else if (tag == "Raw") {
    RawSpec r;
    const json& v = f.raw("V");
    if (v.is_object() && v.contains("lo")) {
      Fields fv(v, P + ".V");
      r.V = UniformV{fv.num("lo"), fv.num("hi")};
      fv.done();
    } else {
      r.V = parse_mixture(v, P + ".V");
    }
    r.B = dist("B");
    r.A = dist("A");
    out = r;
  } else {
    throw ConfigError("model.tag", "unknown model tag '" + tag + "'");
  }
  f.done();
  try {
    std::visit(
        [](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (!std::is_same_v<T, RawSpec>) validate(m);
        },
        out);
  } catch (const ConfigError& e) {
    // model validators name keys relative to the model; report the path inside the config file
    std::string k = e.key;
    if (k.rfind("model.", 0) == 0) k = k.substr(6);
    const std::string msg = std::string(e.what()).substr(e.key.size() + 2);
    throw ConfigError(P + "." + k, msg);
  }
  return out;
}

}  // namespace io

inline bool is_pgf_model(const RunModel& m) {
  return std::holds_alternative<OrbitSpec>(m) || std::holds_alternative<PrioritySpec>(m);
}

inline std::vector<double> default_pgf_grid() { return {0.1, 0.3, 0.5, 0.7, 0.9}; }

inline RunConfig parse_config(const json& j) {
  io::Fields top(j, "");
  RunConfig c;
  c.model = io::parse_model(top.raw("model"), c.tag);
  if (top.has("solver")) {
    io::Fields f(top.raw("solver"), "solver");
    c.solver.max_depth = int(f.integer("max_depth", c.solver.max_depth));
    c.solver.tail_tol = f.num("tail_tol", c.solver.tail_tol);
    c.solver.term_cap = f.integer("term_cap", long(c.solver.term_cap));
    c.s_grid = f.nums("s_grid", c.s_grid);
    if (c.s_grid.empty()) throw ConfigError("solver.s_grid", "must not be empty");
    const std::string m = f.str("method", "automatic");
    if (m == "automatic")
      c.method = SystemTimeMethod::automatic;
    else if (m == "lattice")
      c.method = SystemTimeMethod::lattice;
    else if (m == "collocation")
      c.method = SystemTimeMethod::collocation;
    else
      throw ConfigError("solver.method", "must be automatic, lattice or collocation");
    c.expansion_moments = int(f.integer("expansion_moments", c.expansion_moments));
    c.expansion_order = int(f.integer("expansion_order", c.expansion_order));
    c.corrupt_constant = f.num("test_corrupt_constant", 0.0);
    f.done();
  }
  validate(c.solver);
  if (is_pgf_model(c.model)) {
    if (!(top.has("solver") && j.at("solver").contains("s_grid"))) c.s_grid = default_pgf_grid();
    for (double z : c.s_grid)
      if (!(z >= -1.0 && z <= 1.0)) throw ConfigError("solver.s_grid", "pgf models need points in [-1, 1]");
  }
  c.sim.s_grid = c.s_grid;
  if (top.has("sim")) {
    io::Fields f(top.raw("sim"), "sim");
    c.sim.replications = int(f.integer("replications", c.sim.replications));
    c.sim.horizon = f.integer("horizon", c.sim.horizon);
    c.sim.burn_in = f.integer("burn_in", c.sim.burn_in);
    if (f.has("seed")) {
      const json& s = f.raw("seed");
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
        throw ConfigError("sim.seed", "must be a nonnegative integer");
      c.sim.seed = s.get<std::uint64_t>();
    }
    c.sim.s_grid = f.nums("s_grid", c.s_grid);
    if (is_pgf_model(c.model))
      for (double z : c.sim.s_grid)
        if (!(z >= -1.0 && z <= 1.0)) throw ConfigError("sim.s_grid", "pgf models need points in [-1, 1]");
    c.sim.threads = int(f.integer("threads", c.sim.threads));
    f.done();
  }
  validate(c.sim);
  if (top.has("outputs")) {
    io::Fields f(top.raw("outputs"), "outputs");
    c.outputs.dir = f.str("dir", c.outputs.dir);
    if (f.has("formats")) {
      const json& fm = f.raw("formats");
      if (!fm.is_array()) throw ConfigError("outputs.formats", "must be an array");
      c.outputs.formats.clear();
      for (const auto& x : fm) {
        if (!x.is_string() || (x != "csv" && x != "json")) throw ConfigError("outputs.formats", "entries must be csv or json");
        c.outputs.formats.push_back(x.get<std::string>());
      }
    }
    f.done();
  }
  top.done();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("config", "cannot open " + p.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Write to a temporary sibling, then rename over the target.
inline void write_atomic(const std::filesystem::path& target, const std::string& content) {
  std::filesystem::create_directories(target.parent_path().empty() ? "." : target.parent_path());
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

struct CsvRow {
  double point;
  cplx value;
  std::string source;
  std::optional<double> std_error;
};

inline std::string to_csv(const std::vector<CsvRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "point,re_value,im_value,source,stderr\n";
  for (const auto& r : rows) {
    os << r.point << ',' << r.value.real() << ',' << r.value.imag() << ',' << r.source << ',';
    if (r.std_error) os << *r.std_error;
    os << '\n';
  }
  return os.str();
}

inline json cjson(cplx v) { return json::array({v.real(), v.imag()}); }

/// The result document shared by every analytic run; pgf models map f0 / means onto P0 / EW.
inline json result_json(const std::vector<std::pair<double, cplx>>& grid, double P0, double EW,
                        const std::vector<cplx>& constants, const Diagnostics& d,
                        const std::vector<std::string>& warnings, json extra = json::object()) {
  json j;
  j["Z_grid"] = json::array();
  for (const auto& [s, v] : grid) j["Z_grid"].push_back({s, v.real(), v.imag()});
  j["P0"] = P0;
  j["EW"] = EW;
  j["constants"] = json::array();
  for (const cplx& c : constants) j["constants"].push_back(cjson(c));
  j["diagnostics"] = {{"depth_used", d.depth_used}, {"tail_bound", d.tail_bound}, {"condition", d.condition},
                      {"warnings", warnings}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

inline json estimate_json(const SimEstimate& e) {
  return {{"mean", cjson(e.mean)}, {"stderr", e.std_error}, {"n", e.n}, {"seed", e.seed}};
}

}  // namespace reflectar
