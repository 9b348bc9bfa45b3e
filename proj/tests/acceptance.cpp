// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is nonzero only when a criterion fails that is not listed as a known false identity.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "reflectar/run.hpp"

using namespace reflectar;
namespace fs = std::filesystem;

namespace tol {
constexpr double normalization = 1e-8;
constexpr double z_limit = 3.0;
constexpr int sim_reps = 64;
constexpr long sim_steps = 100000;
constexpr double pk = 1e-8;
constexpr double expansion_fd = 5e-3;
constexpr double takacs = 1e-10;
constexpr double pi0 = 1e-8;
constexpr double pi0_identity = 1e-9;
constexpr double cross_path = 1e-8;
constexpr double bracket = 1e-8;
constexpr double general_dep = 1e-8;
constexpr double transient_s0 = 1e-12;
constexpr double transient_trunc = 1e-6;
constexpr double pgf = 1e-8;
constexpr double alpha_limit = 1e-6;
constexpr double root_q = 1e-12;
constexpr double engine = 1e-10;
constexpr double product = 1e-13;
}  // namespace tol

namespace {

struct Verdict {
  bool pass = true;
  bool unexpected = false;  ///< a failure outside the known false identities
  std::ostringstream detail;

  void need(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    unexpected = true;
    detail << " [failed: " << what << "]";
  }
  /// A stated identity that the modeled chain does not satisfy; reported, never fatal.
  void known_false(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    detail << " [identity does not hold: " << what << "]";
  }
};

double z_of(cplx analytic, const SimEstimate& e) { return std::abs(analytic - e.mean) / e.std_error; }

SimConfig big_sim(std::uint64_t seed) {
  SimConfig c;
  c.replications = tol::sim_reps;
  c.horizon = tol::sim_steps + 10000;
  c.burn_in = 10000;
  c.seed = seed;
  return c;
}

// ---- 1

void normalization(Verdict& v) {
  std::vector<ModelSpec> specs{
      PropService{},
      PropService{0.3, Exponential{1.5}, {{0.2, 0.9}, {0.5, 0.5}}, Exponential{1.0}},
      PropService{0.5, Exponential{1.0}, {{0.3}, {1.0}}, HyperExponential{{0.4, 0.6}, {1.0, 3.0}}},
      PropService{0.6, Deterministic{0.8}, {{0.5}, {1.0}}, Exponential{2.0}},
      MixedDelay{},
      MixedDelay{0.4, {{0.2, 0.5}, {0.5, 0.5}}, 0.7, Exponential{1.0}, HyperExponential{{0.5, 0.5}, {1.0, 2.0}},
                 Exponential{3.0}},
      SystemTime{},
      SystemTime{0.5, Exponential{1.0}, {{0.1}, {1.0}}, 1.0},
      SystemTime{0.5, Exponential{1.0}, {{0.3}, {1.0}}, 0.0},
      WaitDepService{},
      WaitDepService{1.0, 1.5, {{0.3, 1.0}, {0.4, 0.6}}},
      Threshold{},
      Threshold{0.6, 0.6, 1.0, 3.0, Exponential{2.0}, Exponential{1.0}},
      Threshold{0.5, 1.0, 1.0, 2.0, Exponential{1.0}, Exponential{1.0}},
      GeneralDep{0.5, Exponential{1.0}, Exponential{1.0}, {{PsiSpec::Kind::linear, 0.3}}, {1.0}},
  };
  double worst = 0.0;
  for (const auto& s : specs) worst = std::max(worst, std::abs(solve_model(s).transform.eval(0.0) - 1.0));
  worst = std::max(worst, std::abs(solve_orbit_pgf(OrbitSpec{}).eval(1.0) - 1.0));
  worst = std::max(worst, std::abs(solve_priority(PrioritySpec{}).eval2(1.0, 1.0) - 1.0));
  v.detail << specs.size() + 2 << " specs, max |Z(0)-1| or |f(1)-1| = " << worst;
  v.need(worst < tol::normalization, "normalization");
}

// ---- 2

void simulation_agreement(Verdict& v) {
  const std::vector<std::pair<std::string, ModelSpec>> canon{
      {"PropService", PropService{}},
      {"MixedDelay", MixedDelay{}},
      {"SystemTime", SystemTime{}},
      {"WaitDepService", WaitDepService{1.0, 1.5, {{0.3, 1.0}, {0.4, 0.6}}}},
      {"Threshold", Threshold{}},
      {"GeneralDep", GeneralDep{0.5, Exponential{1.0}, Exponential{1.0}, {{PsiSpec::Kind::linear, 0.3}}, {1.0}}},
  };
  double worst = 0.0;
  std::uint64_t seed = 1001;
  for (const auto& [name, spec] : canon) {
    SimConfig cfg = big_sim(seed++);
    cfg.s_grid = {0.25, 0.5, 1.0, 2.0, 4.0};
    const PerfMetrics m = solve_model(spec, {}, cfg.s_grid);
    const WaitingEstimate e = sim_waiting(spec, cfg);
    double w = std::max(z_of(m.P0, e.P0), z_of(m.EW, e.EW));
    for (std::size_t k = 0; k < cfg.s_grid.size(); ++k) w = std::max(w, z_of(m.grid[k].second, e.Z[k].second));
    worst = std::max(worst, w);
    v.detail << ' ' << name << " max|z|=" << w << ';';
    v.need(w <= tol::z_limit, name);
  }
  v.detail << " overall " << worst;
}

// ---- 3

void pollaczek_khinchine(Verdict& v) {
  const SystemTime st{0.5, Exponential{1.0}, {{0.4}, {1.0}}, 0.0};
  const PerfMetrics m = solve_system_time(st);
  const double rho = 0.5, delta = 0.5;
  double worst = 0.0;
  for (int k = 0; k <= 99; ++k) {
    const double s = 0.1 + (10.0 - 0.1) * k / 99.0;
    const double phiB = 1.0 / (1.0 + s);
    const double pk = s * (1.0 - rho) / (s - delta + delta * phiB);
    worst = std::max(worst, std::abs(m.transform.eval(s) - pk));
  }
  v.detail << "100 points on [0.1, 10], max error " << worst;
  v.need(worst < tol::pk, "PK transform");
}

// ---- 4

void expansion(Verdict& v) {
  const SystemTime base{0.5, Exponential{1.0}, {{0.4}, {1.0}}, 0.0};
  const ExpansionResult e = expansion_coeffs(base, 3, 2);
  const double h = 1e-3;
  SystemTime s1 = base, s2 = base;
  s1.eps = h;
  s2.eps = 2 * h;
  const PerfMetrics m0 = solve_system_time(base), m1 = solve_system_time(s1), m2 = solve_system_time(s2);
  const double fd01 = (m1.P0 - m0.P0) / h;
  const double fd11 = (-3.0 * m0.EW + 4.0 * m1.EW - m2.EW) / (2.0 * h);
  // M/G/1 waiting-time moments: E W^k = lambda/(1-rho) sum_j C(k,j) E B^{j+1}/(j+1) E W^{k-j}
  double takacs = 0.0;
  for (int k = 1; k <= 3; ++k) {
    double rhs = 0.0;
    for (int j = 1; j <= k; ++j)
      rhs += std::tgamma(k + 1.0) / (std::tgamma(j + 1.0) * std::tgamma(k - j + 1.0)) * moment(base.B, j + 1) / (j + 1) *
             e.base_moments[k - j];
    rhs *= base.delta / (1.0 - e.rho);
    takacs = std::max(takacs, std::abs(e.base_moments[k] - rhs));
  }
  v.detail << "R01 " << e.R[0][1] << " vs fd " << fd01 << "; R11 " << e.R[1][1] << " vs fd " << fd11
           << "; moment recursion residual " << takacs;
  v.need(std::abs(fd01 - e.R[0][1]) < tol::expansion_fd, "R01");
  v.need(std::abs(fd11 - e.R[1][1]) < tol::expansion_fd, "R11");
  v.need(takacs < tol::takacs, "moment recursion");
}

// ---- 5

void waitdep_atom(Verdict& v) {
  double worst = 0.0;
  for (auto [lam, mu] : {std::pair{0.5, 1.0}, {1.0, 2.0}}) {
    const PerfMetrics m = solve_wait_dep_service(WaitDepService{lam, mu, {{1.0}, {1.0}}});
    worst = std::max(worst, std::abs(m.P0 - std::exp(-lam / mu)));
  }
  double ident = 0.0;
  for (const WaitDepService& w :
       {WaitDepService{1.0, 1.5, {{0.3, 1.0}, {0.4, 0.6}}}, WaitDepService{0.7, 1.0, {{0.2, 0.5, 0.9}, {0.3, 0.3, 0.4}}}}) {
    const PerfMetrics m = solve_wait_dep_service(w);
    cplx lhs = 0.0;
    for (std::size_t l = 0; l < w.Omega.size(); ++l) lhs += w.Omega.probs[l] * m.transform.eval(w.mu * w.Omega.values[l]);
    ident = std::max(ident, std::abs(lhs - w.mu / w.lambda * (1.0 - m.P0)));
  }
  v.detail << "pi0 error " << worst << ", s=0 identity residual " << ident;
  v.need(worst < tol::pi0, "closed-form pi0");
  v.need(ident < tol::pi0_identity, "s=0 identity");
}

// ---- 6

void threshold_paths(Verdict& v) {
  const Threshold e{0.6, 0.6, 1.0, 3.0, Exponential{2.0}, Exponential{1.0}};
  const PerfMetrics g = solve_threshold(e), q = solve_threshold_equal_a(e);
  double cross = 0.0;
  for (double s : {0.5, 1.0, 2.0}) cross = std::max(cross, std::abs(g.transform.eval(s) - q.transform.eval(s)));
  double br = 0.0;
  for (const PerfMetrics* sol : {&g, &q})
    for (double s : {e.lambda0, e.lambda1}) br = std::max(br, std::abs(threshold_bracket(e, *sol, s)));
  v.detail << "cross-path " << cross << ", bracket residual " << br;
  v.need(cross < tol::cross_path, "cross-path");
  v.need(br < tol::bracket, "brackets");
}

// ---- 7

void general_dependence(Verdict& v) {
  double worst = 0.0;
  const std::vector<std::pair<GeneralDep, PropService>> pairs{
      {GeneralDep{0.5, Exponential{1.0}, Exponential{1.0}, {{PsiSpec::Kind::linear, 0.5}}, {1.0}}, PropService{}},
      {GeneralDep{0.5, Exponential{1.0}, Exponential{1.0}, {{PsiSpec::Kind::linear, 0.2}, {PsiSpec::Kind::linear, 0.7}},
                  {0.5, 0.5}},
       PropService{0.5, Exponential{1.0}, {{0.2, 0.7}, {0.5, 0.5}}, Exponential{1.0}}},
  };
  for (const auto& [gd, ps] : pairs) {
    const PerfMetrics a = solve_general_dependence(gd), b = solve_prop_service(ps);
    for (double s : {0.25, 0.5, 1.0, 2.0, 4.0}) worst = std::max(worst, std::abs(a.transform.eval(s) - b.transform.eval(s)));
    worst = std::max({worst, std::abs(a.P0 - b.P0), std::abs(a.EW - b.EW)});
  }
  v.detail << "max difference " << worst;
  v.need(worst < tol::general_dep, "linear psi equivalence");
}

// ---- 8

void transient(Verdict& v) {
  const PropService p{};
  const double r = 0.3;
  int N = 0;
  while (std::pow(r, N + 1) / (1.0 - r) >= tol::transient_trunc) ++N;
  const double bound = std::pow(r, N + 1) / (1.0 - r);
  SimConfig cfg = big_sim(2002);
  const cplx an = transient_prop_service(p, r, 0.0, 1.0);
  const SimEstimate e = sim_transient(p, r, 0.0, 1.0, cfg);
  const double se = e.std_error - bound;  // the estimator folds the truncation bound into its error
  const double diff = std::abs(an - e.mean);
  const cplx an0 = transient_prop_service(p, r, 0.0, 0.0);
  const SimEstimate e0 = sim_transient(p, r, 0.0, 0.0, cfg);
  v.detail << "|analytic - sim| " << diff << " vs " << tol::z_limit << "*" << se << " + " << bound
           << "; s=0 analytic error " << std::abs(an0 - 1.0 / (1.0 - r)) << ", sim spread " << (e0.std_error - bound);
  v.need(diff <= tol::z_limit * se + bound, "s=1 agreement");
  v.need(std::abs(an0 - 1.0 / (1.0 - r)) < tol::transient_s0, "s=0 analytic");
  v.need(std::abs(e0.mean - 1.0 / (1.0 - r)) <= bound + tol::transient_s0, "s=0 simulated");
}

// ---- 9

/// Orbit chain one step, from its dynamics, with C and G the defaults (Poisson 0.6 / 0.4 during Exp(1)).
cplx orbit_rhs(const OrbitSpec& s, const std::function<cplx(cplx)>& f, cplx z) {
  auto pds = [](double rate, cplx x) { return 1.0 / (1.0 + rate * (1.0 - x)); };
  const double w1 = std::isinf(s.alpha1) ? 1.0 : s.alpha1 / (s.alpha1 + s.lambda1);
  const double w0 = std::isinf(s.alpha0) ? 1.0 : s.alpha0 / (s.alpha0 + s.lambda0);
  const cplx k1 = (1.0 - w1) + w1 / z, k0 = (1.0 - w0) + w0 / z;
  const cplx f0 = f(0.0);
  cplx out = f0 * (pds(0.4, z) * k0 + pds(0.4, 0.0) * (1.0 - k0));
  for (std::size_t i = 0; i < s.xi.size(); ++i) {
    const double a = s.xi.values[i], p = s.xi.probs[i];
    const cplx lz = pds(0.6, z) * (f(1.0 - a + a * z) - f0), l0 = pds(0.6, 0.0) * (f(1.0 - a) - f0);
    out += p * (lz * k1 + l0 * (1.0 - k1));
  }
  return out;
}

void retrial(Verdict& v) {
  const OrbitSpec os;
  const PgfSolution f = solve_orbit_pgf(os);
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double res = 0.0;
  for (int k = 0; k < 20; ++k) {
    const cplx z = std::polar(0.15 + 0.8 * U(rng), 2.0 * std::numbers::pi * U(rng));
    res = std::max({res, std::abs(f.eval(z) - orbit_rhs(os, f.eval, z)), std::abs(orbit_residual(os, f, z))});
  }
  const double C0 = pgf_eval(os.C, 0.0).real();
  cplx sum = 0.0;
  for (std::size_t i = 0; i < os.xi.size(); ++i) sum += os.xi.probs[i] * f.eval(1.0 - os.xi.values[i]);
  const double orbit_ident = std::abs(f.f0 - C0 * sum);

  SimConfig cfg = big_sim(3003);
  cfg.s_grid = {1.0 - os.xi.values[0], 1.0 - os.xi.values[1], 0.5};
  const OrbitEstimate oe = sim_orbit(os, cfg);
  const double z_mean = z_of(f.means[0], oe.mean);
  // the same identity evaluated on simulated quantities
  const cplx sim_rhs = C0 * (os.xi.probs[0] * oe.f[0].second.mean + os.xi.probs[1] * oe.f[1].second.mean);
  const double sim_gap = std::abs(oe.empty.mean - sim_rhs);
  const double sim_gap_se =
      std::hypot(oe.empty.std_error, C0 * std::hypot(os.xi.probs[0] * oe.f[0].second.std_error,
                                                      os.xi.probs[1] * oe.f[1].second.std_error));

  OrbitSpec big = os, inf = os;
  big.alpha0 = big.alpha1 = 1e12;
  inf.alpha0 = inf.alpha1 = std::numeric_limits<double>::infinity();
  const PgfSolution fb = solve_orbit_pgf(big), fi = solve_orbit_pgf(inf);
  double lim = std::abs(fb.means[0] - fi.means[0]);
  for (double z : {0.0, 0.3, 0.6, 0.9}) lim = std::max(lim, std::abs(fb.eval(z) - fi.eval(z)));

  const PrioritySpec ps;
  const PgfSolution F = solve_priority(ps);
  double rq = 0.0;
  for (double z2 : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) rq = std::max(rq, std::abs(root_q_residual(ps, z2)));
  cplx psum = 0.0;
  for (std::size_t i = 0; i < ps.xi.size(); ++i) psum += ps.xi.probs[i] * F.eval2(0.0, 1.0 - ps.xi.values[i]);
  const double prio_ident = std::abs(F.eval2(0.0, 0.0) - psum);
  SimConfig pcfg = big_sim(3004);
  pcfg.s_grid = {1.0 - ps.xi.values[0], 1.0 - ps.xi.values[1]};
  const PriorityEstimate pe = sim_priority(ps, pcfg);
  const cplx psim = ps.xi.probs[0] * pe.F0[0].second.mean + ps.xi.probs[1] * pe.F0[1].second.mean;
  const double psim_se = std::hypot(pe.F00.std_error, std::hypot(ps.xi.probs[0] * pe.F0[0].second.std_error,
                                                                 ps.xi.probs[1] * pe.F0[1].second.std_error));
  const double z1 = z_of(F.means[0], pe.EX1), z2 = z_of(F.means[1], pe.EX2);

  v.detail << "orbit: f(1)-1 " << std::abs(f.eval(1.0) - 1.0) << ", equation residual " << res << ", mean |z| " << z_mean
           << ", alpha limit " << lim << ", f(0) identity gap " << orbit_ident << " (simulated gap " << sim_gap << " +- "
           << sim_gap_se << "); priority: q residual " << rq << ", F(1,1)-1 " << std::abs(F.eval2(1.0, 1.0) - 1.0)
           << ", mean |z| " << z1 << ", " << z2 << ", F(0,0) identity gap " << prio_ident << " (simulated gap " << std::abs(pe.F00.mean - psim) << " +- " << psim_se
           << ");";
  v.need(std::abs(f.eval(1.0) - 1.0) < tol::pgf, "f(1)=1");
  v.need(res < tol::pgf, "orbit equation residual");
  v.need(z_mean <= tol::z_limit, "orbit mean vs simulation");
  v.need(lim < tol::alpha_limit, "alpha limit");
  v.need(rq < tol::root_q, "q fixed point");
  v.need(std::abs(F.eval2(1.0, 1.0) - 1.0) < tol::pgf, "F(1,1)=1");
  v.need(z1 <= tol::z_limit && z2 <= tol::z_limit, "priority means vs simulation");
  v.known_false(orbit_ident < tol::pgf, "f(0) = C(0) sum p f(1-a)");
  v.known_false(prio_ident < tol::pgf, "F(0,0) = sum p F(0,1-a)");
}

// ---- 10

/// Z(s) = sum_k w_k(s) Z(a_k s) + f(s) with Z(0) = 1 at the leaves, every path up to `depth`.
/// The maps commute, so paths are grouped by how often each branch was taken.
struct Eq {
  std::vector<double> p, lam, a;
  double c, mu;
  cplx w(std::size_t k, cplx s) const { return p[k] * lam[k] / (lam[k] + s); }
  cplx f(cplx s) const { return c * s / (mu + s); }

  FunctionalEquation equation() const {
    FunctionalEquation eq;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const Eq self = *this;
      eq.branches.push_back({[self, k](cplx s) { return self.w(k, s); }, {a[k], 0.0}});
    }
    const Eq self = *this;
    eq.inhom_fixed = [self](cplx s) { return self.f(s); };
    return eq;
  }

  cplx enumerate(cplx s, int depth) const {
    std::map<std::vector<int>, cplx> memo;
    std::function<cplx(std::vector<int>&, int)> go = [&](std::vector<int>& n, int left) -> cplx {
      if (left == 0) return 1.0;
      if (auto it = memo.find(n); it != memo.end()) return it->second;
      cplx x = s;
      for (std::size_t k = 0; k < n.size(); ++k) x *= std::pow(a[k], n[k]);
      cplx val = f(x);
      for (std::size_t k = 0; k < n.size(); ++k) {
        ++n[k];
        val += w(k, x) * go(n, left - 1);
        --n[k];
      }
      memo[n] = val;
      return val;
    };
    std::vector<int> n(p.size(), 0);
    return go(n, depth);
  }
};

Eq random_eq(std::mt19937_64& rng, int branches, double amax) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eq e;
  double tot = 0.0;
  for (int k = 0; k < branches; ++k) {
    e.p.push_back(0.2 + U(rng));
    tot += e.p.back();
    e.lam.push_back(0.5 + 2.0 * U(rng));
    e.a.push_back(amax * (0.3 + 0.7 * U(rng)));
  }
  for (double& x : e.p) x /= tot;
  e.c = U(rng) - 0.5;
  e.mu = 0.5 + U(rng);
  return e;
}

void engine_oracles(Verdict& v) {
  std::mt19937_64 rng(1010);
  double e1 = 0.0, e2 = 0.0, e3 = 0.0, ep = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Eq q = random_eq(rng, 1, 0.3);
    for (cplx s : {cplx(0.5), cplx(2.0), cplx(1.0, 1.5)})
      e1 = std::max(e1, std::abs(solve_single_branch(q.equation(), s) - q.enumerate(s, 25)));
  }
  for (int i = 0; i < 20; ++i) {
    const Eq q = random_eq(rng, 2, 0.22);
    for (cplx s : {cplx(0.5), cplx(3.0, -1.0)})
      e2 = std::max(e2, std::abs(solve_two_branch(q.equation(), s) - q.enumerate(s, 18)));
  }
  for (int i = 0; i < 20; ++i) {
    const Eq q = random_eq(rng, 3, 0.14);
    for (cplx s : {cplx(1.5, 0.5), cplx(4.0)})
      e3 = std::max(e3, std::abs(solve_multi_branch_commuting(q.equation(), s) - q.enumerate(s, 15)));
  }
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const double a = 0.2 + 0.6 * U(rng), b = U(rng);
    auto factor = [=](int j) { return cplx(1.0 / (1.0 + b * std::pow(a, j))); };
    cplx direct = 1.0;
    for (int j = 0; j < 200; ++j) direct *= factor(j);
    ep = std::max(ep, std::abs(infinite_product(factor).value - direct));
  }
  v.detail << "single " << e1 << ", two " << e2 << ", multi " << e3 << ", product " << ep;
  v.need(e1 < tol::engine, "single branch");
  v.need(e2 < tol::engine, "two branches");
  v.need(e3 < tol::engine, "multi branch");
  v.need(ep < tol::product, "infinite product");
}

// ---- 11

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run_cli(const fs::path& cfg, const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" REFLECTAR_CLI "\" compare --config \"" + cfg.string() + "\" " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

void determinism(Verdict& v) {
  const fs::path root = fs::temp_directory_path() / "reflectar_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const json exp1 = {{"tag", "Exponential"}, {"params", {{"rate", 1.0}}}};
  const json sim = {{"replications", 16}, {"horizon", 30000}, {"burn_in", 3000}, {"seed", 77}};
  const std::vector<std::pair<std::string, json>> models{
      {"prop", {{"tag", "PropService"},
                {"params", {{"a", 0.5}, {"B", exp1}, {"G", {{"values", {0.5}}, {"probs", {1.0}}}}, {"J", exp1}}}}},
      {"threshold", {{"tag", "Threshold"},
                     {"params", {{"a0", 0.5}, {"a1", 0.7}, {"lambda0", 1.0}, {"lambda1", 3.0},
                                 {"B", {{"tag", "Exponential"}, {"params", {{"rate", 2.0}}}}}, {"T", exp1}}}}},
  };
  int runs = 0;
  for (const auto& [name, model] : models) {
    const fs::path cfg = root / (name + ".json");
    std::ofstream(cfg) << json{{"model", model}, {"sim", sim}}.dump(2);
    const fs::path d1 = root / (name + "_t1"), d3 = root / (name + "_t3"), de = root / (name + "_env");
    const int c1 = run_cli(cfg, "--threads 1 --out \"" + d1.string() + "\"");
    const int c3 = run_cli(cfg, "--threads 3 --out \"" + d3.string() + "\"");
    const int ce = run_cli(cfg, "--out \"" + de.string() + "\"", "REFLECTAR_THREADS=2");
    v.need(c1 == c3 && c1 == ce && (c1 == exit_ok || c1 == exit_compare_fail), name + " exit codes");
    for (const char* f : {"compare.json", "compare.csv"}) {
      const std::string a = slurp(d1 / f);
      v.need(!a.empty() && a == slurp(d3 / f) && a == slurp(de / f), name + " " + f);
    }
    runs += 3;
  }
  v.detail << runs << " compare runs at 1, 2 and 3 threads, result files byte-compared";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
      {"normalization", normalization},
      {"simulation agreement", simulation_agreement},
      {"Pollaczek-Khinchine reduction", pollaczek_khinchine},
      {"perturbation coefficients", expansion},
      {"closed-form pi0", waitdep_atom},
      {"threshold cross-path", threshold_paths},
      {"general dependence", general_dependence},
      {"transient", transient},
      {"retrial suite", retrial},
      {"engine oracles", engine_oracles},
      {"determinism", determinism},
  };
  bool fatal = false;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    v.detail.precision(3);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.need(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2zu %s  %s: %s  (%.1f s)\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                v.detail.str().c_str(), secs);
    std::fflush(stdout);
    fatal = fatal || v.unexpected;
  }
  return fatal ? 1 : 0;
}
