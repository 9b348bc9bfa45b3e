#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dists.hpp"
#include "errors.hpp"

namespace reflectar {

using CFun = std::function<cplx(cplx)>;

/// s -> scale*s + shift
struct AffineMap {
  double scale = 1.0;
  double shift = 0.0;

  cplx operator()(cplx s) const { return scale * s + shift; }

  /// (this o g)(s) = this(g(s))
  AffineMap after(const AffineMap& g) const { return {scale * g.scale, scale * g.shift + shift}; }

  double fixed_point() const { return shift / (1.0 - scale); }
};

struct BranchTerm {
  CFun weight;
  AffineMap map;
};

/// Z(s) = sum_i h_i(s) Z(g_i(s)) + Phi(s) + sum_j C_j Psi_j(s)
struct FunctionalEquation {
  std::vector<BranchTerm> branches;
  CFun inhom_fixed;
  std::vector<CFun> inhom_basis;
  std::vector<cplx> constants;
  /// Value of Z at the common fixed point of the maps; scales the homogeneous limit.
  cplx fixed_value = 1.0;
  /// Poles of the weights / inhomogeneous terms. Iterated points that land
  /// within 1e-6 of one of these are treated as removable singularities.
  std::vector<cplx> poles;
};

struct SolveOptions {
  int max_depth = 200;
  double tail_tol = 1e-12;
  long long term_cap = 10'000'000;
};

inline void validate(const SolveOptions& o) {
  if (o.max_depth < 1) throw ConfigError("solver.max_depth", "must be >= 1");
  if (!(o.tail_tol > 0.0) || o.tail_tol > 1e-3) throw ConfigError("solver.tail_tol", "must lie in (0, 1e-3]");
  if (o.term_cap < 1) throw ConfigError("solver.term_cap", "must be >= 1");
}

struct Diagnostics {
  int depth_used = 0;
  double tail_bound = 0.0;
  double condition = 1.0;
};

struct TransformSolution {
  std::function<cplx(cplx)> eval;
  std::vector<cplx> constants;
  Diagnostics diagnostics;
};

/// c0 + sum_j c[j] C_j; the value of Z (or of a constraint) as an affine form in the constants.
struct Affine {
  cplx c0 = 0.0;
  std::vector<cplx> c;

  static Affine constant(cplx v, std::size_t m) { return {v, std::vector<cplx>(m, 0.0)}; }
  static Affine unknown(std::size_t j, std::size_t m) {
    Affine a{0.0, std::vector<cplx>(m, 0.0)};
    a.c[j] = 1.0;
    return a;
  }
  cplx at(const std::vector<cplx>& C) const {
    cplx v = c0;
    for (std::size_t j = 0; j < c.size(); ++j) v += c[j] * C[j];
    return v;
  }
};

inline Affine operator+(Affine a, const Affine& b) {
  a.c0 += b.c0;
  for (std::size_t j = 0; j < a.c.size(); ++j) a.c[j] += b.c[j];
  return a;
}
inline Affine operator*(cplx k, Affine a) {
  a.c0 *= k;
  for (auto& x : a.c) x *= k;
  return a;
}
inline Affine operator-(const Affine& a, const Affine& b) { return a + (-1.0) * b; }
inline Affine operator+(Affine a, cplx v) {
  a.c0 += v;
  return a;
}

/// Mean of f over N points on the circle |z - center| = r: the regular part
/// of f at the center when f has at most poles there.
template <class F>
auto circle_mean(F&& f, cplx center, double r, int n = 16) {
  using R = decltype(f(center));
  R acc{};
  for (int k = 0; k < n; ++k) {
    const double th = 2.0 * std::numbers::pi * (k + 0.5) / n;
    acc = acc + f(center + r * cplx(std::cos(th), std::sin(th)));
  }
  return (1.0 / n) * acc;
}

/// f'(x) by the trapezoid rule on a circle (Cauchy integral formula).
template <class F>
cplx circle_derivative(F&& f, cplx x, double r, int n = 32) {
  cplx acc = 0.0;
  for (int k = 0; k < n; ++k) {
    const double th = 2.0 * std::numbers::pi * (k + 0.5) / n;
    const cplx e(std::cos(th), std::sin(th));
    acc += f(x + r * e) / e;
  }
  return acc / (double(n) * r);
}

struct ProductResult {
  cplx value = 1.0;
  double tail_bound = 0.0;
  int terms = 0;
};

/// prod_{j>=0} factor(j), for factors tending to 1 geometrically.
inline ProductResult infinite_product(const std::function<cplx(int)>& factor, const SolveOptions& opts = {}) {
  ProductResult r;
  double prev_dev = -1.0;
  int not_decreasing = 0;
  for (int j = 0; j < opts.term_cap; ++j) {
    const cplx f = factor(j);
    const double dev = std::abs(f - 1.0);
    r.value *= f;
    r.terms = j + 1;
    if (prev_dev >= 0.0) {
      not_decreasing = dev >= prev_dev && dev > 0.0 ? not_decreasing + 1 : 0;
      if (not_decreasing >= 50) throw NonConvergenceError("infinite product: factors stopped approaching 1");
    }
    if (dev == 0.0 && (prev_dev == 0.0 || prev_dev < 0.0)) {
      r.tail_bound = 0.0;
      return r;
    }
    if (prev_dev > 0.0 && dev < opts.tail_tol) {
      const double q = dev / prev_dev;
      if (q < 1.0) {
        r.tail_bound = std::abs(r.value) * std::expm1(dev * q / (1.0 - q));
        if (r.tail_bound < 1e-2 * opts.tail_tol) return r;
      }
    }
    prev_dev = dev;
  }
  throw NonConvergenceError("infinite product: term cap reached");
}

namespace detail {

/// Homogeneous limit plus one sum per inhomogeneous term, for a fixed s.
struct SeriesParts {
  cplx hom = 0.0;
  std::vector<cplx> sums;
  int depth = 0;
  double tail = 0.0;
  bool hit_pole = false;
};

inline bool near_pole(cplx x, const std::vector<cplx>& poles) {
  for (const cplx& p : poles)
    if (std::abs(x - p) < 1e-6 * std::max(1.0, std::abs(p))) return true;
  return false;
}

/// Layer-by-layer convergence bookkeeping shared by the lattice solvers.
struct LayerMonitor {
  double max_scale;
  double tail_tol;
  double prev_delta = -1.0;
  int quiet = 0;
  double tail = 0.0;

  /// `size` is the magnitude of the partial sums; the bound is relative to max(1, size).
  bool done(double delta, double size) {
    double q = max_scale;
    if (prev_delta > 0.0) q = std::max(q, delta / prev_delta);
    q = std::min(q, 0.999);
    tail = delta * q / (1.0 - q);
    prev_delta = delta;
    quiet = tail < tail_tol * std::max(1.0, size) ? quiet + 1 : 0;
    return quiet >= 2;
  }
};

inline std::vector<CFun> all_inhoms(const FunctionalEquation& eq) {
  std::vector<CFun> v;
  v.push_back(eq.inhom_fixed ? eq.inhom_fixed : CFun([](cplx) { return cplx(0.0); }));
  for (const auto& f : eq.inhom_basis) v.push_back(f);
  return v;
}

inline SeriesParts single_branch_parts(const FunctionalEquation& eq, const std::vector<CFun>& inh, cplx s,
                                       const SolveOptions& opts) {
  const auto& br = eq.branches.at(0);
  SeriesParts out;
  out.sums.assign(inh.size(), 0.0);
  LayerMonitor mon{std::abs(br.map.scale), opts.tail_tol};
  cplx prod = 1.0, x = s;
  long long terms = 0;
  // Every layer is an analytic function of q^n, so the partial sums approach
  // their limit as c q^n + O(q^{2n}); removing the known-ratio term lets
  // scales near 1 converge in about half the depth.
  const double q = br.map.scale;
  const bool richardson = q != 0.0 && std::abs(q) < 1.0;
  std::vector<cplx> prev, prev_ext;
  int quiet = 0;
  for (int n = 0; n <= opts.max_depth; ++n) {
    if (near_pole(x, eq.poles)) {
      out.hit_pole = true;
      return out;
    }
    double delta = 0.0;
    for (std::size_t k = 0; k < inh.size(); ++k) {
      const cplx t = prod * inh[k](x);
      out.sums[k] += t;
      delta = std::max(delta, std::abs(t));
    }
    const cplx next = prod * br.weight(x);
    delta += std::abs(next - prod) * std::abs(eq.fixed_value);
    prod = next;
    x = br.map(x);
    terms += 1 + long(inh.size());
    out.depth = n + 1;
    if (terms > opts.term_cap) throw NonConvergenceError("single-branch solve exceeded term cap");
    double size = std::abs(prod * eq.fixed_value);
    for (const cplx& v : out.sums) size = std::max(size, std::abs(v));
    if (richardson) {
      std::vector<cplx> cur = out.sums;
      cur.push_back(prod);
      std::vector<cplx> ext(cur.size());
      double err = std::numeric_limits<double>::infinity();
      if (!prev.empty()) {
        for (std::size_t k = 0; k < cur.size(); ++k) ext[k] = cur[k] + (cur[k] - prev[k]) * q / (1.0 - q);
        if (!prev_ext.empty()) {
          err = 0.0;
          for (std::size_t k = 0; k < cur.size(); ++k) {
            const double w = k + 1 == cur.size() ? std::abs(eq.fixed_value) : 1.0;
            err = std::max(err, w * std::abs(ext[k] - prev_ext[k]) / (1.0 - q * q));
          }
        }
      }
      prev = std::move(cur);
      prev_ext = ext;
      quiet = err < opts.tail_tol * std::max(1.0, size) ? quiet + 1 : 0;
      if (quiet >= 2) {
        out.hom = ext.back();
        for (std::size_t k = 0; k < out.sums.size(); ++k) out.sums[k] = ext[k];
        out.tail = err;
        return out;
      }
      continue;
    }
    if (mon.done(delta, size)) {
      out.hom = prod;
      out.tail = mon.tail;
      return out;
    }
  }
  throw NonConvergenceError("single-branch solve: tail bound not met within max_depth");
}

/// Dynamic programming over the (k, n-k) grid for two scaling branches.
inline SeriesParts two_branch_parts(const FunctionalEquation& eq, const std::vector<CFun>& inh, cplx s,
                                    const SolveOptions& opts) {
  const auto& b0 = eq.branches.at(0);
  const auto& b1 = eq.branches.at(1);
  // a scale-1 branch must be a pure scaling, so the other branch fixes the centre
  const double c = b0.map.scale != 1.0 ? b0.map.fixed_point() : b1.map.fixed_point();
  const double a0 = b0.map.scale, a1 = b1.map.scale;
  SeriesParts out;
  out.sums.assign(inh.size(), 0.0);
  LayerMonitor mon{std::max(std::abs(a0), std::abs(a1)), opts.tail_tol};
  // cur[k] = K_{k, n-k}(s): k steps along branch 0, n-k along branch 1
  std::vector<cplx> cur{1.0};
  cplx prev_mass = 1.0;
  long long terms = 0;
  for (int n = 0; n <= opts.max_depth; ++n) {
    std::vector<cplx> nxt(n + 2, 0.0);
    double delta = 0.0;
    std::vector<cplx> layer(inh.size(), 0.0);
    for (int k = 0; k <= n; ++k) {
      const cplx x = c + std::pow(a0, k) * std::pow(a1, n - k) * (s - c);
      if (near_pole(x, eq.poles)) {
        out.hit_pole = true;
        return out;
      }
      if (cur[k] == 0.0) continue;
      for (std::size_t j = 0; j < inh.size(); ++j) layer[j] += cur[k] * inh[j](x);
      nxt[k + 1] += cur[k] * b0.weight(x);
      nxt[k] += cur[k] * b1.weight(x);
      terms += 2 + long(inh.size());
    }
    if (terms > opts.term_cap) throw NonConvergenceError("two-branch solve exceeded term cap");
    for (std::size_t j = 0; j < inh.size(); ++j) {
      out.sums[j] += layer[j];
      delta = std::max(delta, std::abs(layer[j]));
    }
    cplx mass = 0.0;
    for (const cplx& v : nxt) mass += v;
    delta += std::abs(mass - prev_mass) * std::abs(eq.fixed_value);
    prev_mass = mass;
    cur = std::move(nxt);
    out.depth = n + 1;
    double size = std::abs(mass * eq.fixed_value);
    for (const cplx& v : out.sums) size = std::max(size, std::abs(v));
    if (mon.done(delta, size)) {
      out.hom = mass;
      out.tail = mon.tail;
      return out;
    }
  }
  throw NonConvergenceError("two-branch solve: layer contributions above tail_tol at max_depth");
}

/// Memoized recursion on the K-dimensional multi-index lattice.
inline SeriesParts multi_branch_parts(const FunctionalEquation& eq, const std::vector<CFun>& inh, cplx s,
                                      const SolveOptions& opts) {
  const std::size_t K = eq.branches.size();
  const double c = eq.branches.at(0).map.fixed_point();
  double max_scale = 0.0;
  for (const auto& b : eq.branches) {
    if (b.map.scale == 1.0 || std::abs(b.map.fixed_point() - c) > 1e-12 * std::max(1.0, std::abs(c)))
      throw UnsupportedError("multi-branch solver needs commuting contractions with a common fixed point");
    max_scale = std::max(max_scale, std::abs(b.map.scale));
  }
  SeriesParts out;
  out.sums.assign(inh.size(), 0.0);
  LayerMonitor mon{max_scale, opts.tail_tol};
  using Index = std::vector<int>;
  std::map<Index, cplx> cur{{Index(K, 0), 1.0}};
  cplx prev_mass = 1.0;
  long long terms = 0;
  for (int n = 0; n <= opts.max_depth; ++n) {
    std::map<Index, cplx> nxt;
    std::vector<cplx> layer(inh.size(), 0.0);
    for (const auto& [idx, m] : cur) {
      double sc = 1.0;
      for (std::size_t j = 0; j < K; ++j) sc *= std::pow(eq.branches[j].map.scale, idx[j]);
      const cplx x = c + sc * (s - c);
      if (near_pole(x, eq.poles)) {
        out.hit_pole = true;
        return out;
      }
      for (std::size_t j = 0; j < inh.size(); ++j) layer[j] += m * inh[j](x);
      for (std::size_t j = 0; j < K; ++j) {
        Index up = idx;
        ++up[j];
        nxt[up] += m * eq.branches[j].weight(x);
      }
      terms += long(K + inh.size());
    }
    if (terms > opts.term_cap) throw NonConvergenceError("multi-branch solve exceeded term cap");
    double delta = 0.0;
    for (std::size_t j = 0; j < inh.size(); ++j) {
      out.sums[j] += layer[j];
      delta = std::max(delta, std::abs(layer[j]));
    }
    cplx mass = 0.0;
    for (const auto& kv : nxt) mass += kv.second;
    delta += std::abs(mass - prev_mass) * std::abs(eq.fixed_value);
    prev_mass = mass;
    cur = std::move(nxt);
    out.depth = n + 1;
    double size = std::abs(mass * eq.fixed_value);
    for (const cplx& v : out.sums) size = std::max(size, std::abs(v));
    if (mon.done(delta, size)) {
      out.hom = mass;
      out.tail = mon.tail;
      return out;
    }
  }
  throw NonConvergenceError("multi-branch solve: layer contributions above tail_tol at max_depth");
}

enum class Route { single, two, multi };

inline Route pick_route(const FunctionalEquation& eq) {
  if (eq.branches.size() == 1) return Route::single;
  if (eq.branches.size() == 2) {
    const auto& m0 = eq.branches[0].map;
    const auto& m1 = eq.branches[1].map;
    const bool pure = m0.shift == 0.0 && m1.shift == 0.0;
    if ((pure && (m0.scale != 1.0 || m1.scale != 1.0)) ||
        (m0.scale != 1.0 && m1.scale != 1.0 && std::abs(m0.fixed_point() - m1.fixed_point()) < 1e-12))
      return Route::two;
  }
  return Route::multi;
}

inline SeriesParts parts_once(const FunctionalEquation& eq, const std::vector<CFun>& inh, cplx s,
                              const SolveOptions& opts, Route route) {
  switch (route) {
    case Route::single: return single_branch_parts(eq, inh, s, opts);
    case Route::two: return two_branch_parts(eq, inh, s, opts);
    default: return multi_branch_parts(eq, inh, s, opts);
  }
}

/// Evaluate all series parts at s; if an iterated point sits on a declared
/// pole, average over a small circle around s instead (the singularity is
/// removable in the assembled solution, and the circle mean of each part
/// returns its regular part).
inline SeriesParts parts(const FunctionalEquation& eq, const std::vector<CFun>& inh, cplx s, const SolveOptions& opts,
                         Route route) {
  SeriesParts p = parts_once(eq, inh, s, opts, route);
  if (!p.hit_pole) return p;
  const double r = 1e-3 * std::max(1.0, std::abs(s));
  const int N = 16;
  SeriesParts acc;
  acc.sums.assign(inh.size(), 0.0);
  for (int k = 0; k < N; ++k) {
    const double th = 2.0 * std::numbers::pi * (k + 0.5) / N;
    const SeriesParts q = parts_once(eq, inh, s + r * cplx(std::cos(th), std::sin(th)), opts, route);
    if (q.hit_pole) throw PoleProximityError("removable-singularity circle touches another pole");
    acc.hom += q.hom / double(N);
    for (std::size_t j = 0; j < inh.size(); ++j) acc.sums[j] += q.sums[j] / double(N);
    acc.depth = std::max(acc.depth, q.depth);
    acc.tail = std::max(acc.tail, q.tail);
  }
  return acc;
}

inline cplx assemble(const FunctionalEquation& eq, const SeriesParts& p) {
  cplx v = eq.fixed_value * p.hom + p.sums[0];
  for (std::size_t j = 0; j < eq.inhom_basis.size(); ++j)
    v += (j < eq.constants.size() ? eq.constants[j] : cplx(0.0)) * p.sums[j + 1];
  return v;
}

/// Z(s) as an affine form in the unknown constants.
inline Affine affine_at(const FunctionalEquation& eq, cplx s, const SolveOptions& opts, Diagnostics* d = nullptr) {
  const auto inh = all_inhoms(eq);
  const SeriesParts p = parts(eq, inh, s, opts, pick_route(eq));
  if (d) {
    d->depth_used = std::max(d->depth_used, p.depth);
    d->tail_bound = std::max(d->tail_bound, p.tail);
  }
  Affine a{eq.fixed_value * p.hom + p.sums[0], {}};
  for (std::size_t j = 1; j < p.sums.size(); ++j) a.c.push_back(p.sums[j]);
  return a;
}

}  // namespace detail

inline cplx solve_single_branch(const FunctionalEquation& eq, cplx s, const SolveOptions& opts = {}) {
  if (eq.branches.size() != 1) throw UnsupportedError("solve_single_branch needs exactly one branch");
  return detail::assemble(eq, detail::parts(eq, detail::all_inhoms(eq), s, opts, detail::Route::single));
}

inline cplx solve_two_branch(const FunctionalEquation& eq, cplx s, const SolveOptions& opts = {}) {
  if (eq.branches.size() != 2) throw UnsupportedError("solve_two_branch needs exactly two branches");
  for (const auto& b : eq.branches)
    if (b.map.shift != 0.0 || !(b.map.scale > 0.0 && b.map.scale <= 1.0))
      throw UnsupportedError("solve_two_branch needs pure scalings in (0,1]");
  if (eq.branches[0].map.scale == 1.0 && eq.branches[1].map.scale == 1.0)
    throw UnsupportedError("solve_two_branch needs at least one contracting branch");
  return detail::assemble(eq, detail::parts(eq, detail::all_inhoms(eq), s, opts, detail::Route::two));
}

inline cplx solve_multi_branch_commuting(const FunctionalEquation& eq, cplx s, const SolveOptions& opts = {}) {
  if (eq.branches.empty()) throw UnsupportedError("no branches");
  return detail::assemble(eq, detail::parts(eq, detail::all_inhoms(eq), s, opts, detail::Route::multi));
}

struct ShiftChainResult {
  cplx value = 1.0;
  cplx deriv = 0.0;  ///< d/ds of the value
  int depth = 0;
};

/// S(s) = 1 + sum over step sequences (l_1..l_n) of
///   prod_k g_{l_k} lam / (mu + s + mu (a_{l_1} + ... + a_{l_{k-1}})).
/// The factor depends only on the multiset of earlier steps, so the sum is
/// carried on the lattice of step counts.
inline ShiftChainResult solve_shift_chain(const DiscreteMixture& w, double lam, double mu, cplx s,
                                          const SolveOptions& opts = {}) {
  if (lam < 0.0 || !(mu > 0.0)) throw ConfigError("shift_chain", "need lambda >= 0 and mu > 0");
  ShiftChainResult r;
  if (lam == 0.0) return r;
  const std::size_t K = w.size();
  using Index = std::vector<int>;
  struct Node {
    cplx v, dv;
  };
  std::map<Index, Node> cur{{Index(K, 0), {1.0, 0.0}}};
  long long terms = 0;
  for (int n = 1; n <= std::max(opts.max_depth, 1000); ++n) {
    std::map<Index, Node> nxt;
    for (const auto& [idx, node] : cur) {
      double A = 0.0;
      for (std::size_t j = 0; j < K; ++j) A += idx[j] * w.values[j];
      const cplx den = mu + s + mu * A;
      const cplx f = lam / den, df = -lam / (den * den);
      for (std::size_t j = 0; j < K; ++j) {
        if (w.probs[j] == 0.0) continue;
        Index up = idx;
        ++up[j];
        Node& t = nxt[up];
        t.v += w.probs[j] * f * node.v;
        t.dv += w.probs[j] * (f * node.dv + df * node.v);
      }
      terms += long(K);
    }
    if (terms > opts.term_cap) throw NonConvergenceError("shift chain exceeded term cap");
    cplx layer = 0.0, dlayer = 0.0;
    for (const auto& kv : nxt) {
      layer += kv.second.v;
      dlayer += kv.second.dv;
    }
    r.value += layer;
    r.deriv += dlayer;
    r.depth = n;
    cur = std::move(nxt);
    if (std::abs(layer) < opts.tail_tol * std::abs(r.value) * 1e-2 &&
        std::abs(dlayer) < opts.tail_tol * std::max(1.0, std::abs(r.deriv)) * 1e-2)
      return r;
  }
  throw NonConvergenceError("shift chain did not settle");
}

/// One constraint: the relation expr(Z(points...)) = 0, built by `relation`
/// from the affine forms of Z at the listed points.
struct Constraint {
  std::vector<cplx> points;
  std::function<Affine(const std::vector<Affine>&)> relation;
  std::string label;
};

/// Solve the constants of an equation that is affine in them, and return the
/// assembled transform.
inline TransformSolution solve_with_linear_constants(FunctionalEquation eq, const std::vector<Constraint>& constraints,
                                                     const SolveOptions& opts = {}) {
  const std::size_t m = eq.inhom_basis.size();
  if (constraints.size() != m) throw ConfigError("constraints", "need exactly one constraint per unknown constant");
  TransformSolution sol;
  std::vector<cplx> C(m, 0.0);
  if (m > 0) {
    Eigen::MatrixXcd A(m, m);
    Eigen::VectorXcd b(m);
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<Affine> zs;
      for (const cplx& p : constraints[i].points) zs.push_back(detail::affine_at(eq, p, opts, &sol.diagnostics));
      const Affine rel = constraints[i].relation(zs);
      if (rel.c.size() != m) throw ConfigError("constraints", "relation has wrong arity");
      for (std::size_t j = 0; j < m; ++j) A(i, j) = rel.c[j];
      b(i) = -rel.c0;
    }
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
    const double rc = lu.rcond();
    sol.diagnostics.condition = rc > 0.0 ? 1.0 / rc : INFINITY;
    if (!(sol.diagnostics.condition <= 1e12)) {
      std::ostringstream os;
      os << "constant system ill-conditioned (cond " << sol.diagnostics.condition << ") for constraints:";
      for (const auto& c : constraints) os << " [" << c.label << "]";
      throw IllConditionedError(os.str());
    }
    const Eigen::VectorXcd x = lu.solve(b);
    for (std::size_t j = 0; j < m; ++j) C[j] = x(j);
  }
  eq.constants = C;
  sol.constants = C;
  sol.eval = [eq, opts](cplx s) { return detail::affine_at(eq, s, opts).at(eq.constants); };
  return sol;
}

/// lim_{s->inf} f(s) by Richardson extrapolation in 1/s from s0, 2 s0, 4 s0, ...
inline double limit_at_infinity(const std::function<double(double)>& f, double s0 = 1e3, int levels = 4) {
  std::vector<double> T;
  for (int k = 0; k < levels; ++k) T.push_back(f(s0 * std::pow(2.0, k)));
  for (int j = 1; j < levels; ++j)
    for (int k = levels - 1; k >= j; --k) {
      const double p = std::pow(2.0, j);
      T[k] = (p * T[k] - T[k - 1]) / (p - 1.0);
    }
  return T.back();
}

}  // namespace reflectar
