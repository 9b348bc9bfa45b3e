#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "dists.hpp"
#include "engine.hpp"
#include "errors.hpp"

namespace reflectar {

/// W' = [aW + (1-G)B - J]^+
struct PropService {
  double a = 0.5;
  Dist B = Exponential{1.0};
  DiscreteMixture G{{0.5}, {1.0}};
  Dist J = Exponential{1.0};
};

/// W' = [aW + B - (cB + J)^+]^+ with J = J+ w.p. p and -J- w.p. 1-p.
struct MixedDelay {
  double a = 0.5;
  DiscreteMixture c{{0.4}, {1.0}};
  double p = 0.6;
  Dist B = Exponential{1.0};
  Dist Jplus = Exponential{1.0};
  Dist Jminus = Exponential{2.0};
};

/// W' = [(1 - eps G)(W + B) - J]^+, J ~ Exp(delta).
struct SystemTime {
  double delta = 0.5;
  Dist B = Exponential{1.0};
  DiscreteMixture G{{0.3, 0.6}, {0.5, 0.5}};
  double eps = 1.0;
};

/// W' = [W + [B - Omega W]^+ - A]^+, A ~ Exp(lambda), B ~ Exp(mu).
struct WaitDepService {
  double lambda = 1.0;
  double mu = 2.0;
  DiscreteMixture Omega{{1.0}, {1.0}};
};

/// W' = [a0 W + B - J0]^+ if B < T, else [a1 W + T - J1]^+; Jk ~ Exp(lambda_k).
struct Threshold {
  double a0 = 0.5, a1 = 0.7;
  double lambda0 = 1.0, lambda1 = 3.0;
  Dist B = Exponential{2.0};
  Dist T = Exponential{1.0};
};

/// psi(s) = coef * s (linear) or coef * (1 - LST_H(s)) (compound Poisson).
struct PsiSpec {
  enum class Kind { linear, compound_poisson } kind = Kind::linear;
  double coef = 0.0;
  Dist H = Exponential{1.0};
};

/// E(e^{-sA} | B = t) = chi(s) sum_i p_i exp(-psi_i(s) t); W' = [aW + B - A]^+.
struct GeneralDep {
  double a = 0.5;
  Dist B = Exponential{1.0};
  Dist chi = Exponential{1.0};
  std::vector<PsiSpec> psi{PsiSpec{}};
  std::vector<double> probs{1.0};
};

using ModelSpec = std::variant<PropService, MixedDelay, SystemTime, WaitDepService, Threshold, GeneralDep>;

inline const char* model_tag(const ModelSpec& m) {
  static const char* tags[] = {"PropService", "MixedDelay", "SystemTime", "WaitDepService", "Threshold", "GeneralDep"};
  return tags[m.index()];
}

struct PerfMetrics {
  TransformSolution transform;
  double P0 = 0.0;
  double EW = 0.0;
  std::vector<std::pair<double, cplx>> grid;
  std::vector<std::string> warnings;
};

struct ExpansionResult {
  /// R[l][h]: coefficient of eps^h in P(W=0) (l = 0) or E(W^l) (l >= 1); h = 0 is the base value.
  std::vector<std::vector<double>> R;
  std::vector<double> base_moments;
  double rho = 0.0;
};

inline std::vector<double> default_grid() { return {0.25, 0.5, 1.0, 2.0, 4.0}; }

namespace detail {

inline void need_range(double x, double lo, double hi, const std::string& key, bool lo_open = true, bool hi_open = true) {
  const bool ok = (lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi) && std::isfinite(x);
  if (!ok) throw ConfigError(key, "out of range");
}

inline double exp_rate(const Dist& d, const std::string& key) {
  auto e = std::get_if<Exponential>(&d);
  if (!e) throw ConfigError(key, "must be exponential here");
  return e->rate;
}

inline HyperExponential hyper_or_exp(const Dist& d, const std::string& key) {
  if (std::holds_alternative<Exponential>(d) || std::holds_alternative<HyperExponential>(d)) return *as_hyper(d);
  throw ConfigError(key, "must be exponential or hyperexponential here");
}

/// sum_{k>=m} a^k / (1 - a^k), summed as sum_{j>=1} a^{jm} / (1 - a^j).
inline double lambert_tail(double a, int m) {
  double v = 0.0, aj = 1.0;
  for (int j = 1; j < 100000; ++j) {
    aj *= a;
    const double t = std::pow(aj, m) / (1.0 - aj);
    v += t;
    if (t < 1e-17 * v) break;
  }
  return v;
}

/// S = sum_{n>=0} a^{n+1} / (1 - a^{n+1}) prod_{j<=n} K(a^j delta), K(0) = 1.
/// Once K(a^n delta) is near 1 the remaining running product is frozen and the
/// scalar Lambert tail is added exactly, leaving an O(a^{2n}) error.
struct LambertSum {
  cplx S;
  int terms;
};

inline LambertSum lambert_sum(double a, double delta, const std::function<cplx(cplx)>& K, const SolveOptions& opts,
                              const char* what) {
  cplx S = 0.0, run = 1.0;
  for (int n = 0; n <= opts.max_depth; ++n) {
    const double an = std::pow(a, n + 1);
    S += an / (1.0 - an) * run;
    run *= K(an * delta);
    const cplx tail = run * lambert_tail(a, n + 2);
    const double err = std::abs(tail) * std::abs(K(an * a * delta) - 1.0) / (1.0 - a);
    if (err < opts.tail_tol * std::max(1.0, std::abs(S))) return {S + tail, n + 1};
  }
  throw NonConvergenceError(std::string(what) + " did not settle");
}

inline PerfMetrics finish(TransformSolution t, double P0, double EW, const std::vector<double>& grid) {
  PerfMetrics m;
  m.transform = std::move(t);
  m.P0 = P0;
  m.EW = EW;
  for (double s : grid) m.grid.emplace_back(s, m.transform.eval(s));
  return m;
}

/// Sum of the (1-G)-scaled service transform: sum_i p_i phi_B(s (1 - beta_i)).
inline cplx mix_lst(const Dist& B, const DiscreteMixture& G, cplx s) {
  cplx v = 0.0;
  for (std::size_t i = 0; i < G.size(); ++i) v += G.probs[i] * lst_eval(B, s * (1.0 - G.values[i]));
  return v;
}

}  // namespace detail

inline void validate(const PropService& m) {
  detail::need_range(m.a, 0.0, 1.0, "model.a");
  validate(m.B, "model.B");
  validate(m.J, "model.J");
  validate(m.G, "model.G");
}

/// Stationary Z for exponential J; Z(a delta) comes from the explicit product/sum ratio.
inline PerfMetrics solve_prop_service(const PropService& m, const SolveOptions& opts = {},
                                      const std::vector<double>& grid = default_grid()) {
  validate(m);
  const double delta = detail::exp_rate(m.J, "model.J");
  for (double b : m.G.values)
    if (b < 0.0 || b > 1.0) throw ConfigError("model.G.values", "stationary solver needs beta in [0,1]");
  const double a = m.a;
  auto K = [=](cplx s) { return delta / (delta - s) * detail::mix_lst(m.B, m.G, s); };
  const ProductResult prod = infinite_product([&](int j) { return K(std::pow(a, j + 1) * delta); }, opts);
  const auto [S, n] = detail::lambert_sum(a, delta, K, opts, "stationary sum");
  const cplx phibar = detail::mix_lst(m.B, m.G, delta);
  const cplx Za = prod.value / (1.0 + phibar * S);
  const double P = (phibar * Za).real();

  FunctionalEquation eq;
  eq.branches.push_back({K, {a, 0.0}});
  eq.inhom_fixed = [=](cplx s) { return -P * s / (delta - s); };
  eq.poles = {delta};
  TransformSolution t;
  t.constants = {P};
  t.diagnostics.depth_used = std::max(prod.terms, n);
  t.diagnostics.tail_bound = prod.tail_bound;
  t.eval = [eq, opts](cplx s) { return solve_single_branch(eq, s, opts); };
  double bbar = 0.0;
  for (std::size_t i = 0; i < m.G.size(); ++i) bbar += m.G.probs[i] * (1.0 - m.G.values[i]);
  const double EW = (mean(m.B) * bbar - (1.0 - P) / delta) / (1.0 - a);
  return detail::finish(std::move(t), P, EW, grid);
}

/// Hyperexponential J: one unknown c_j = q_j sum_i p_i phi_B(delta_j (1-beta_i)) Z(a delta_j) per phase.
inline PerfMetrics solve_prop_service_hyper(const PropService& m, const SolveOptions& opts = {},
                                            const std::vector<double>& grid = default_grid()) {
  validate(m);
  const HyperExponential J = detail::hyper_or_exp(m.J, "model.J");
  for (double b : m.G.values)
    if (b < 0.0 || b > 1.0) throw ConfigError("model.G.values", "stationary solver needs beta in [0,1]");
  const std::size_t L = J.rates.size();
  FunctionalEquation eq;
  eq.branches.push_back({[=](cplx s) {
                           cplx v = 0.0;
                           for (std::size_t j = 0; j < L; ++j) v += J.weights[j] * J.rates[j] / (J.rates[j] - s);
                           return v * detail::mix_lst(m.B, m.G, s);
                         },
                         {m.a, 0.0}});
  std::vector<Constraint> cons;
  for (std::size_t j = 0; j < L; ++j) {
    const double dj = J.rates[j];
    eq.inhom_basis.push_back([dj](cplx s) { return -s / (dj - s); });
    eq.poles.push_back(dj);
    const cplx w = J.weights[j] * detail::mix_lst(m.B, m.G, dj);
    cons.push_back({{m.a * dj},
                    [=](const std::vector<Affine>& z) { return Affine::unknown(j, L) - w * z[0]; },
                    "phase " + std::to_string(j)});
  }
  TransformSolution t = solve_with_linear_constants(eq, cons, opts);
  double P = 0.0, tail = 0.0;
  for (std::size_t j = 0; j < L; ++j) {
    P += t.constants[j].real();
    tail += (J.weights[j] - t.constants[j].real()) / J.rates[j];
  }
  double bbar = 0.0;
  for (std::size_t i = 0; i < m.G.size(); ++i) bbar += m.G.probs[i] * (1.0 - m.G.values[i]);
  const double EW = (mean(m.B) * bbar - tail) / (1.0 - m.a);
  return detail::finish(std::move(t), P, EW, grid);
}

/// Y(s) = sum_{n>=0} r^n E(e^{-s W_{n+1}} | W_0 = w) for B ~ Exp(mu), J ~ Exp(delta).
inline TransformSolution transient_prop_service_solution(const PropService& m, double r, double w,
                                                         const SolveOptions& opts = {}) {
  validate(m);
  detail::need_range(r, 0.0, 1.0, "r");
  if (!(w >= 0.0)) throw ConfigError("w", "must be nonnegative");
  const double mu = detail::exp_rate(m.B, "model.B");
  const double delta = detail::exp_rate(m.J, "model.J");
  const double a = m.a;
  // E e^{-s(1-beta)B} = sum_i p_i / (1 - gamma_i s), gamma_i = (beta_i - 1)/mu
  std::vector<double> gam, pr;
  for (std::size_t i = 0; i < m.G.size(); ++i) {
    gam.push_back((m.G.values[i] - 1.0) / mu);
    pr.push_back(m.G.probs[i]);
  }
  std::vector<double> splus;
  for (double g : gam)
    if (g > 0.0) splus.push_back(1.0 / g);
  std::sort(splus.begin(), splus.end());
  for (std::size_t i = 1; i < splus.size(); ++i)
    if (std::abs(splus[i] - splus[i - 1]) < 1e-12) throw DegenerateError("repeated positive root s+");
  for (double sp : splus)
    if (std::abs(sp - delta) < 1e-9) throw DegenerateError("positive root s+ coincides with delta");
  auto g_all = [=](cplx s) {
    cplx v = 1.0;
    for (double g : gam)
      if (g != 0.0) v *= 1.0 - g * s;
    return v;
  };
  auto f_num = [=](cplx s) {
    cplx v = 0.0;
    for (std::size_t i = 0; i < gam.size(); ++i) {
      cplx t = pr[i];
      for (std::size_t j = 0; j < gam.size(); ++j)
        if (j != i && gam[j] != 0.0) t *= 1.0 - gam[j] * s;
      v += t;
    }
    return v;
  };
  auto g_plus = [=](cplx s) {
    cplx v = 1.0;
    for (double sp : splus) v *= s - sp;
    return v;
  };
  auto g_minus_at = [=](cplx s) {
    // g / g+ with the cancelled factors removed explicitly (valid at s = s+)
    cplx v = 1.0;
    for (double g : gam) {
      if (g > 0.0)
        v *= -g;
      else if (g < 0.0)
        v *= 1.0 - g * s;
    }
    return v;
  };
  auto k = [=](cplx s) { return delta / (delta - s) * f_num(s) / g_all(s); };
  const std::size_t m1 = splus.size() + 1;
  FunctionalEquation eq;
  eq.branches.push_back({[=](cplx s) { return r * k(s); }, {a, 0.0}});
  eq.inhom_fixed = [=](cplx s) { return k(s) * std::exp(-s * a * w); };
  for (std::size_t i = 1; i <= m1; ++i)
    eq.inhom_basis.push_back([=](cplx s) { return std::pow(s, double(i)) / ((delta - s) * g_plus(s)); });
  eq.fixed_value = 1.0 / (1.0 - r);
  eq.poles = {delta};
  for (double sp : splus) eq.poles.push_back(sp);
  std::vector<double> pts{delta};
  for (double sp : splus) pts.push_back(sp);
  std::vector<Constraint> cons;
  for (double p : pts) {
    const cplx c = delta * f_num(p) / g_minus_at(p);
    const cplx e = std::exp(-p * a * w);
    cons.push_back({{a * p},
                    [=](const std::vector<Affine>& z) {
                      Affine rel = c * (r * z[0] + e);
                      for (std::size_t i = 1; i <= m1; ++i) rel.c[i - 1] += std::pow(p, double(i));
                      return rel;
                    },
                    "s = " + std::to_string(p)});
  }
  return solve_with_linear_constants(eq, cons, opts);
}

inline cplx transient_prop_service(const PropService& m, double r, double w, cplx s, const SolveOptions& opts = {}) {
  return transient_prop_service_solution(m, r, w, opts).eval(s);
}

inline void validate(const MixedDelay& m) {
  detail::need_range(m.a, 0.0, 1.0, "model.a");
  detail::need_range(m.p, 0.0, 1.0, "model.p", false, false);
  validate(m.c, "model.c");
  for (double c : m.c.values) detail::need_range(c, 0.0, 1.0, "model.c.values");
  validate(m.B, "model.B");
}

namespace detail {

struct MixedParts {
  HyperExponential jp, jm;
  cplx H(const MixedDelay& m, cplx s) const {
    cplx V = 0.0, U = 0.0;
    for (std::size_t j = 0; j < jp.rates.size(); ++j) V += jp.weights[j] * jp.rates[j] / (jp.rates[j] - s);
    for (std::size_t j = 0; j < jm.rates.size(); ++j) U += jm.weights[j] * jm.rates[j] / (jm.rates[j] + s);
    const double q = 1.0 - m.p;
    cplx h = 0.0;
    for (std::size_t k = 0; k < m.c.size(); ++k) {
      const double ck = m.c.values[k];
      cplx cut = 0.0;
      for (std::size_t j = 0; j < jm.rates.size(); ++j)
        cut += jm.weights[j] / (jm.rates[j] + s) * lst_eval(m.B, s + jm.rates[j] * ck);
      h += m.c.probs[k] * (lst_eval(m.B, s * (1.0 - ck)) * (m.p * V + q * U) + q * s * cut);
    }
    return h;
  }
  double H_deriv0(const MixedDelay& m) const {
    double V1 = 0.0, U1 = 0.0;
    for (std::size_t j = 0; j < jp.rates.size(); ++j) V1 += jp.weights[j] / jp.rates[j];
    for (std::size_t j = 0; j < jm.rates.size(); ++j) U1 -= jm.weights[j] / jm.rates[j];
    const double q = 1.0 - m.p, EB = mean(m.B);
    double d = 0.0;
    for (std::size_t k = 0; k < m.c.size(); ++k) {
      const double ck = m.c.values[k];
      double cut = 0.0;
      for (std::size_t j = 0; j < jm.rates.size(); ++j)
        cut += jm.weights[j] / jm.rates[j] * lst_eval(m.B, jm.rates[j] * ck).real();
      d += m.c.probs[k] * (-EB * (1.0 - ck) + m.p * V1 + q * U1 + q * cut);
    }
    return d;
  }
};

}  // namespace detail

/// Single unknown P for exponential J+ (closed form); L x L system for hyperexponential J+.
inline PerfMetrics solve_mixed_delay(const MixedDelay& m, const SolveOptions& opts = {},
                                     const std::vector<double>& grid = default_grid()) {
  validate(m);
  const detail::MixedParts mp{detail::hyper_or_exp(m.Jplus, "model.Jplus"),
                              detail::hyper_or_exp(m.Jminus, "model.Jminus")};
  const double a = m.a;
  auto H = [=](cplx s) { return mp.H(m, s); };
  auto cbar_lst = [&](double d) {
    cplx v = 0.0;
    for (std::size_t k = 0; k < m.c.size(); ++k) v += m.c.probs[k] * lst_eval(m.B, d * (1.0 - m.c.values[k]));
    return v;
  };
  FunctionalEquation eq;
  eq.branches.push_back({H, {a, 0.0}});
  TransformSolution t;
  double P0 = 0.0, Ld = 0.0;
  if (mp.jp.rates.size() == 1) {
    const double delta = mp.jp.rates[0];
    const ProductResult prod = infinite_product([&](int j) { return H(std::pow(a, j + 1) * delta); }, opts);
    const auto [S, n] = detail::lambert_sum(a, delta, H, opts, "mixed-delay sum");
    const cplx pphi = m.p * cbar_lst(delta);
    P0 = (pphi * prod.value / (1.0 + pphi * S)).real();
    const double P = P0;
    eq.inhom_fixed = [=](cplx s) { return -P * s / (delta - s); };
    eq.poles = {delta};
    t.constants = {P};
    t.diagnostics.depth_used = std::max(prod.terms, n);
    t.diagnostics.tail_bound = prod.tail_bound;
    t.eval = [eq, opts](cplx s) { return solve_single_branch(eq, s, opts); };
    Ld = -P / delta;
  } else {
    const std::size_t L = mp.jp.rates.size();
    std::vector<Constraint> cons;
    for (std::size_t j = 0; j < L; ++j) {
      const double dj = mp.jp.rates[j];
      eq.inhom_basis.push_back([dj](cplx s) { return -s / (dj - s); });
      eq.poles.push_back(dj);
      const cplx w = m.p * mp.jp.weights[j] * cbar_lst(dj);
      cons.push_back({{a * dj},
                      [=](const std::vector<Affine>& z) { return Affine::unknown(j, L) - w * z[0]; },
                      "phase " + std::to_string(j)});
    }
    t = solve_with_linear_constants(eq, cons, opts);
    for (std::size_t j = 0; j < L; ++j) {
      P0 += t.constants[j].real();
      Ld -= t.constants[j].real() / mp.jp.rates[j];
    }
  }
  const double EW = -(mp.H_deriv0(m) + Ld) / (1.0 - a);
  return detail::finish(std::move(t), P0, EW, grid);
}

inline void validate(const SystemTime& m) {
  detail::need_range(m.delta, 0.0, INFINITY, "model.delta");
  validate(m.B, "model.B");
  validate(m.G, "model.G");
  if (!(m.eps >= 0.0)) throw ConfigError("model.eps", "must be nonnegative");
  for (double b : m.G.values) {
    const double bb = 1.0 - m.eps * b;
    if (!(bb > 0.0 && bb <= 1.0)) throw ConfigError("model.G.values", "1 - eps*beta must lie in (0,1]");
  }
  if (!(m.delta * mean(m.B) < 1.0)) throw ConfigError("model.delta", "needs delta E(B) < 1");
}

enum class SystemTimeMethod { automatic, lattice, collocation };

namespace detail {

/// Barycentric interpolant on Chebyshev-Lobatto points in x, with s = L(1+x)/(1-x).
/// Node 0 is x = 1 (s = infinity), node n is x = -1 (s = 0).
struct RationalCheb {
  double L = 1.0;
  std::vector<double> x;
  std::vector<double> v;

  static RationalCheb nodes(int n, double L) {
    RationalCheb c;
    c.L = L;
    for (int k = 0; k <= n; ++k) c.x.push_back(std::cos(std::numbers::pi * k / n));
    c.v.assign(n + 1, 1.0);
    return c;
  }
  double x_of(double s) const { return std::isinf(s) ? 1.0 : (s - L) / (s + L); }
  cplx x_of(cplx s) const { return std::isinf(s.real()) ? cplx(1.0) : (s - L) / (s + L); }
  double bw(int k) const {
    const int n = int(x.size()) - 1;
    return (k % 2 ? -1.0 : 1.0) * ((k == 0 || k == n) ? 0.5 : 1.0);
  }

  /// Interpolation weights: value at x = sum_k row[k] v[k].
  std::vector<double> row(double xs) const {
    const int n = int(x.size()) - 1;
    std::vector<double> r(n + 1, 0.0);
    double den = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double d = xs - x[k];
      if (d == 0.0) {
        std::fill(r.begin(), r.end(), 0.0);
        r[k] = 1.0;
        return r;
      }
      r[k] = bw(k) / d;
      den += r[k];
    }
    for (auto& e : r) e /= den;
    return r;
  }

  cplx operator()(cplx s) const {
    const cplx xs = x_of(s);
    const int n = int(x.size()) - 1;
    cplx num = 0.0, den = 0.0;
    for (int k = 0; k <= n; ++k) {
      const cplx d = xs - x[k];
      if (std::abs(d) < 1e-15) return v[k];
      num += bw(k) * v[k] / d;
      den += bw(k) / d;
    }
    return num / den;
  }

  /// dZ/ds at s = 0 from the Chebyshev coefficients: Z'(x=-1) = sum_j a_j (-1)^{j+1} j^2, dx/ds = 2/L.
  double deriv_at_zero() const {
    const int n = int(x.size()) - 1;
    double acc = 0.0;
    for (int j = 1; j <= n; ++j) {
      double a = 0.0;
      for (int k = 0; k <= n; ++k) a += ((k == 0 || k == n) ? 0.5 : 1.0) * v[k] * std::cos(std::numbers::pi * j * k / n);
      a *= 2.0 / n;
      if (j == n) a *= 0.5;
      acc += a * ((j % 2) ? 1.0 : -1.0) * j * j;
    }
    return acc * 2.0 / L;
  }
};

}  // namespace detail

/// Stationary transform of the system-time model. Z = A - P B with A, B from the
/// multi-index lattice when every 1 - eps beta_i <= 0.8; otherwise (or on request)
/// collocation of (delta - s) Z(s) - delta sum_i p_i phi_B(s bbar_i) Z(s bbar_i) + s P = 0
/// on a rational Chebyshev grid, with Z(0) = 1, solved by least squares.
inline PerfMetrics solve_system_time(const SystemTime& m, const SolveOptions& opts = {},
                                     const std::vector<double>& grid = default_grid(),
                                     SystemTimeMethod method = SystemTimeMethod::automatic) {
  validate(m);
  const double delta = m.delta, EB = mean(m.B), rho = delta * EB;
  double b = 0.0, max_bb = 0.0;
  std::vector<double> bb;
  for (std::size_t i = 0; i < m.G.size(); ++i) {
    b += m.G.probs[i] * m.G.values[i];
    bb.push_back(1.0 - m.eps * m.G.values[i]);
    max_bb = std::max(max_bb, bb.back());
  }
  if (method == SystemTimeMethod::automatic)
    method = max_bb <= 0.8 ? SystemTimeMethod::lattice : SystemTimeMethod::collocation;
  TransformSolution t;
  double P = 0.0;
  std::function<double()> dZ0;
  if (method == SystemTimeMethod::lattice) {
    if (max_bb >= 1.0) throw ConfigError("model.eps", "lattice method needs every 1 - eps*beta < 1");
    FunctionalEquation eq;
    for (std::size_t i = 0; i < m.G.size(); ++i) {
      const double p = m.G.probs[i], f = bb[i];
      eq.branches.push_back({[=](cplx s) { return delta / (delta - s) * p * lst_eval(m.B, s * f); }, {f, 0.0}});
    }
    eq.inhom_basis.push_back([=](cplx s) { return -s / (delta - s); });
    eq.poles = {delta};
    std::vector<cplx> pts;
    for (double f : bb) pts.push_back(delta * f);
    const std::size_t K = bb.size();
    Constraint pin{pts,
                   [=, &m](const std::vector<Affine>& z) {
                     Affine rel = Affine::unknown(0, 1);
                     for (std::size_t i = 0; i < K; ++i)
                       rel = rel - (m.G.probs[i] * lst_eval(m.B, delta * bb[i])) * z[i];
                     return rel;
                   },
                   "P pin"};
    t = solve_with_linear_constants(eq, {pin}, opts);
    P = t.constants[0].real();
    const auto f = t.eval;
    dZ0 = [f, delta] { return circle_derivative(f, 0.0, 0.05 * delta).real(); };
  } else {
    const int n = 96, M = 2 * n;
    auto Z = detail::RationalCheb::nodes(n, delta);
    // unknowns: v[0..n], P; rows: M collocation points plus normalization
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(M + 1, n + 2);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(M + 1);
    for (int j = 0; j < M; ++j) {
      // the equation times (1 - x)/delta: -2x Z(x) - (1 - x) N(s)/delta + (1 + x) P = 0
      const double x = std::cos(std::numbers::pi * (j + 0.5) / M);
      const double s = delta * (1.0 + x) / (1.0 - x);
      const auto r0 = Z.row(x);
      for (int k = 0; k <= n; ++k) A(j, k) -= 2.0 * x * r0[k];
      for (std::size_t i = 0; i < bb.size(); ++i) {
        const double w = (1.0 - x) * m.G.probs[i] * lst_eval(m.B, s * bb[i]).real();
        const auto ri = Z.row(Z.x_of(s * bb[i]));
        for (int k = 0; k <= n; ++k) A(j, k) -= w * ri[k];
      }
      A(j, n + 1) = 1.0 + x;
    }
    A(M, n) = 1.0;
    rhs(M) = 1.0;
    const Eigen::VectorXd sol = A.colPivHouseholderQr().solve(rhs);
    const double resid = (A * sol - rhs).norm();
    if (!(resid < 1e-8)) throw NonConvergenceError("system-time collocation residual " + std::to_string(resid));
    for (int k = 0; k <= n; ++k) Z.v[k] = sol(k);
    P = sol(n + 1);
    t.constants = {P};
    t.diagnostics.depth_used = n;
    t.diagnostics.tail_bound = resid;
    t.eval = [Z](cplx s) { return Z(s); };
    dZ0 = [Z] { return Z.deriv_at_zero(); };
  }
  double EW;
  const double scale = delta * m.eps * b;
  if (m.eps == 0.0)
    EW = delta * moment(m.B, 2) / (2.0 * (1.0 - rho));
  else if (scale > 1e-6)
    EW = (P - (1.0 - rho) - rho * m.eps * b) / scale;
  else
    EW = -dZ0();
  return detail::finish(std::move(t), P, EW, grid);
}

/// Power-series coefficients in eps of P(W=0) and E(W^l), from the moment
/// equations of the system-time model solved order by order.
inline ExpansionResult expansion_coeffs(const SystemTime& m, int L, int order) {
  validate(m.B, "model.B");
  validate(m.G, "model.G");
  const double delta = m.delta;
  const double rho = delta * mean(m.B);
  if (!(rho < 1.0)) throw ConfigError("model.delta", "expansion needs rho < 1");
  if (L < 1 || order < 0) throw ConfigError("expand", "need L >= 1 and order >= 0");
  const int top = L + order + 1;
  auto binom = [](int n, int k) { return std::tgamma(n + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(n - k + 1.0)); };
  std::vector<double> EB(top + 2), Gk(top + 2);
  for (int k = 0; k <= top + 1; ++k) {
    EB[k] = moment(m.B, k);
    Gk[k] = 0.0;
    for (std::size_t i = 0; i < m.G.size(); ++i) Gk[k] += m.G.probs[i] * std::pow(m.G.values[i], k);
  }
  // S_l(eps) = sum_i p_i (1 - eps beta_i)^l = sum_k C(l,k) (-eps)^k E G^k
  auto S = [&](int l, int k) { return k > l ? 0.0 : binom(l, k) * ((k % 2) ? -1.0 : 1.0) * Gk[k]; };
  std::vector<std::vector<double>> M(top + 1, std::vector<double>(order + 1, 0.0));
  std::vector<double> P(order + 1, 0.0);
  M[0][0] = 1.0;
  for (int h = 0; h <= order; ++h) {
    for (int l = 1; l <= L + order - h + 1; ++l) {
      double rhs = 0.0;
      for (int k = 0; k <= std::min(h, l); ++k)
        for (int j = 0; j < l; ++j) {
          if (k == 0 && j == l - 1) continue;
          rhs += delta * S(l, k) * binom(l, j) * EB[l - j] * M[j][h - k];
        }
      for (int k = 1; k <= std::min(h, l); ++k) rhs += delta * S(l, k) * M[l][h - k];
      if (l == 1)
        P[h] = (1.0 - rho) * M[0][h] - rhs;
      else
        M[l - 1][h] = rhs / (l * (1.0 - rho));
    }
  }
  ExpansionResult r;
  r.rho = rho;
  r.R.assign(L + 1, std::vector<double>(order + 1, 0.0));
  for (int h = 0; h <= order; ++h) {
    r.R[0][h] = P[h];
    for (int l = 1; l <= L; ++l) r.R[l][h] = M[l][h];
  }
  for (int l = 0; l <= L; ++l) r.base_moments.push_back(M[l][0]);
  return r;
}

inline void validate(const WaitDepService& m) {
  if (!(m.lambda >= 0.0)) throw ConfigError("model.lambda", "must be nonnegative");
  if (!(m.mu > 0.0)) throw ConfigError("model.mu", "must be positive");
  validate(m.Omega, "model.Omega");
  for (double v : m.Omega.values) detail::need_range(v, 0.0, 1.0, "model.Omega.values", true, false);
}

/// pi0 = 1 / S(0) and Z = pi0 S(s), S from the shift chain.
inline PerfMetrics solve_wait_dep_service(const WaitDepService& m, const SolveOptions& opts = {},
                                          const std::vector<double>& grid = default_grid()) {
  validate(m);
  const ShiftChainResult s0 = solve_shift_chain(m.Omega, m.lambda, m.mu, 0.0, opts);
  const double pi0 = 1.0 / s0.value.real();
  TransformSolution t;
  t.constants = {pi0};
  t.diagnostics.depth_used = s0.depth;
  t.eval = [m, opts, pi0](cplx s) { return pi0 * solve_shift_chain(m.Omega, m.lambda, m.mu, s, opts).value; };
  const double EW = -pi0 * s0.deriv.real();
  return detail::finish(std::move(t), pi0, EW, grid);
}

inline void validate(const Threshold& m) {
  detail::need_range(m.a0, 0.0, 1.0, "model.a0", true, false);
  detail::need_range(m.a1, 0.0, 1.0, "model.a1", true, false);
  detail::need_range(m.lambda0, 0.0, INFINITY, "model.lambda0");
  detail::need_range(m.lambda1, 0.0, INFINITY, "model.lambda1");
  validate(m.B, "model.B");
  validate(m.T, "model.T");
}

namespace detail {

inline Threshold separate_rates(Threshold m, std::vector<std::string>& warnings) {
  if (std::abs(m.lambda0 - m.lambda1) < 1e-8) {
    m.lambda1 += 1e-6 * m.lambda1;
    warnings.push_back("lambda0 and lambda1 nearly coincide; lambda1 perturbed by 1e-6 relative");
  }
  return m;
}

inline double threshold_mean(const Threshold& m, const std::vector<cplx>& C) {
  const auto [c0, p0] = chi_psi(m.B, m.T, 0.0);
  const auto [dc, dp] = chi_psi_deriv(m.B, m.T, 0.0);
  const double num = c0.real() / m.lambda0 + p0.real() / m.lambda1 + dc.real() + dp.real() +
                     C[0].real() / (m.lambda0 * m.lambda1);
  return -num / (1.0 - m.a0 * c0.real() - m.a1 * p0.real());
}

}  // namespace detail

/// Two-branch solve for general a0, a1 in (0,1); constants C1, C2 from the
/// pole-cancellation conditions at lambda0 and lambda1.
inline PerfMetrics solve_threshold(const Threshold& spec, const SolveOptions& opts = {},
                                   const std::vector<double>& grid = default_grid()) {
  validate(spec);
  std::vector<std::string> warnings;
  const Threshold m = detail::separate_rates(spec, warnings);
  if (m.a0 >= 1.0 || m.a1 >= 1.0) throw ConfigError("model.a1", "general threshold path needs a0, a1 < 1");
  const double l0 = m.lambda0, l1 = m.lambda1;
  const Dist B = m.B, T = m.T;
  FunctionalEquation eq;
  eq.branches.push_back({[=](cplx s) { return l0 / (l0 - s) * chi_psi(B, T, s).first; }, {m.a0, 0.0}});
  eq.branches.push_back({[=](cplx s) { return l1 / (l1 - s) * chi_psi(B, T, s).second; }, {m.a1, 0.0}});
  eq.inhom_basis.push_back([=](cplx s) { return s / ((l0 - s) * (l1 - s)); });
  eq.inhom_basis.push_back([=](cplx s) { return s * s / ((l0 - s) * (l1 - s)); });
  eq.poles = {l0, l1};
  const cplx chi0 = chi_psi(B, T, l0).first, psi1 = chi_psi(B, T, l1).second;
  std::vector<Constraint> cons{
      {{m.a0 * l0},
       [=](const std::vector<Affine>& z) {
         return ((l1 - l0) * chi0) * z[0] + Affine::unknown(0, 2) + l0 * Affine::unknown(1, 2);
       },
       "s = lambda0"},
      {{m.a1 * l1},
       [=](const std::vector<Affine>& z) {
         return ((l0 - l1) * psi1) * z[0] + Affine::unknown(0, 2) + l1 * Affine::unknown(1, 2);
       },
       "s = lambda1"}};
  TransformSolution t = solve_with_linear_constants(eq, cons, opts);
  const double P0 = t.constants[1].real();
  const double EW = detail::threshold_mean(m, t.constants);
  auto out = detail::finish(std::move(t), P0, EW, grid);
  out.warnings = warnings;
  return out;
}

/// a0 = a1 = a: single branch with H = h0 + h1; Z(a lambda_k) from explicit products.
inline PerfMetrics solve_threshold_equal_a(const Threshold& spec, const SolveOptions& opts = {},
                                           const std::vector<double>& grid = default_grid()) {
  validate(spec);
  if (spec.a0 != spec.a1) throw ConfigError("model.a1", "equal-a path needs a0 == a1");
  if (spec.a0 >= 1.0) throw ConfigError("model.a0", "needs a < 1");
  std::vector<std::string> warnings;
  const Threshold m = detail::separate_rates(spec, warnings);
  const double a = m.a0, l0 = m.lambda0, l1 = m.lambda1;
  const Dist B = m.B, T = m.T;
  auto H = [=](cplx s) {
    const auto [c, p] = chi_psi(B, T, s);
    return l0 / (l0 - s) * c + l1 / (l1 - s) * p;
  };
  auto basis = [=](cplx s, int j) { return std::pow(s, double(j)) / ((l0 - s) * (l1 - s)); };
  // Z(a lk) = prod_n H(a^{n+1} lk) + sum_j C_j sum_n basis_j(a^{n+1} lk) prod_{i<n} H(a^{i+1} lk)
  auto explicit_at = [&](double lk) {
    const ProductResult pr = infinite_product([&](int j) { return H(std::pow(a, j + 1) * lk); }, opts);
    cplx s1 = 0.0, s2 = 0.0, run = 1.0;
    for (int n = 0;; ++n) {
      const double x = std::pow(a, n + 1) * lk;
      const cplx t1 = run * basis(x, 1), t2 = run * basis(x, 2);
      s1 += t1;
      s2 += t2;
      if (std::abs(t1) + std::abs(t2) < opts.tail_tol * 1e-2) break;
      if (n > 4 * opts.max_depth) throw NonConvergenceError("equal-a sum did not settle");
      run *= H(x);
    }
    return Affine{pr.value, {s1, s2}};
  };
  const Affine Z0 = explicit_at(l0), Z1 = explicit_at(l1);
  const auto [chi0, unused0] = chi_psi(B, T, l0);
  const auto [unused1, psi1] = chi_psi(B, T, l1);
  (void)unused0;
  (void)unused1;
  // (l1-l0) chi(l0) Z(a l0) + C1 + l0 C2 = 0 ; (l0-l1) psi(l1) Z(a l1) + C1 + l1 C2 = 0
  Eigen::Matrix2cd A;
  Eigen::Vector2cd rhs;
  const cplx k0 = (l1 - l0) * chi0, k1 = (l0 - l1) * psi1;
  A << k0 * Z0.c[0] + 1.0, k0 * Z0.c[1] + l0, k1 * Z1.c[0] + 1.0, k1 * Z1.c[1] + l1;
  rhs << -k0 * Z0.c0, -k1 * Z1.c0;
  Eigen::PartialPivLU<Eigen::Matrix2cd> lu(A);
  const double cond = 1.0 / lu.rcond();
  if (!(cond <= 1e12)) throw IllConditionedError("equal-a 2x2 system ill-conditioned");
  const Eigen::Vector2cd C = lu.solve(rhs);
  FunctionalEquation eq;
  eq.branches.push_back({H, {a, 0.0}});
  eq.inhom_fixed = [=](cplx s) { return (C(0) * s + C(1) * s * s) / ((l0 - s) * (l1 - s)); };
  eq.poles = {l0, l1};
  TransformSolution t;
  t.constants = {C(0), C(1)};
  t.diagnostics.condition = cond;
  t.eval = [eq, opts](cplx s) { return solve_single_branch(eq, s, opts); };
  const double EW = detail::threshold_mean(m, t.constants);
  auto out = detail::finish(std::move(t), C(1).real(), EW, grid);
  out.warnings = warnings;
  return out;
}

/// lambda0(lambda1 - s) chi Z(a s) + lambda1(lambda0 - s) psi Z(a s) + s C1 + s^2 C2 for the a0 = a1 model;
/// vanishes at s = lambda0, lambda1 when the constants are right.
inline cplx threshold_bracket(const Threshold& m, const PerfMetrics& sol, cplx s) {
  const auto [c, p] = chi_psi(m.B, m.T, s);
  const cplx Za = sol.transform.eval(m.a0 * s);
  const auto& C = sol.transform.constants;
  return m.lambda0 * (m.lambda1 - s) * c * Za + m.lambda1 * (m.lambda0 - s) * p * Za + s * C[0] + s * s * C[1];
}

/// Root of lambda1 - s - lambda1 psi(s) in (0, lambda1): the pole of the cut-off transform.
inline double cutoff_pole(const Threshold& m) {
  auto D = [&](double s) { return m.lambda1 - s - m.lambda1 * chi_psi(m.B, m.T, s).second.real(); };
  const double lo = 0.0, hi = m.lambda1;
  if (!(D(lo) > 0.0)) throw DegenerateError("cut-off transform: psi(0) = 1, no positive pole");
  boost::uintmax_t iters = 200;
  auto r = boost::math::tools::toms748_solve(D, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
  return 0.5 * (r.first + r.second);
}

/// beta(s) = chi / (1 - lambda1 psi / (lambda1 - s))
inline cplx cutoff_beta(const Threshold& m, cplx s) {
  const auto [c, p] = chi_psi(m.B, m.T, s);
  return c / (1.0 - m.lambda1 * p / (m.lambda1 - s));
}

/// a1 = 1. Z = lambda0 beta / (lambda0 - s) Z(a0 s) + (s C1 + s^2 C2) / ((lambda0 - s) D(s)),
/// D = lambda1 - s - lambda1 psi; constants from cancellation at lambda0 and at the root of D.
inline PerfMetrics solve_threshold_cutoff(const Threshold& spec, const SolveOptions& opts = {},
                                          const std::vector<double>& grid = default_grid()) {
  validate(spec);
  if (spec.a1 != 1.0) throw ConfigError("model.a1", "cut-off path needs a1 == 1");
  if (spec.a0 >= 1.0) throw ConfigError("model.a0", "needs a0 < 1");
  const Threshold m = spec;
  const double l0 = m.lambda0, l1 = m.lambda1, a0 = m.a0;
  const Dist B = m.B, T = m.T;
  const double sstar = cutoff_pole(m);
  if (std::abs(sstar - l0) < 1e-9) throw DegenerateError("cut-off pole coincides with lambda0");
  auto D = [=](cplx s) { return l1 - s - l1 * chi_psi(B, T, s).second; };
  FunctionalEquation eq;
  eq.branches.push_back({[=](cplx s) {
                           const auto [c, p] = chi_psi(B, T, s);
                           return l0 * c * (l1 - s) / ((l0 - s) * (l1 - s - l1 * p));
                         },
                         {a0, 0.0}});
  eq.inhom_basis.push_back([=](cplx s) { return s / ((l0 - s) * D(s)); });
  eq.inhom_basis.push_back([=](cplx s) { return s * s / ((l0 - s) * D(s)); });
  eq.poles = {l0, sstar};
  std::vector<Constraint> cons;
  for (double p : {l0, sstar}) {
    const cplx k = l0 * (l1 - p) * chi_psi(B, T, p).first;
    cons.push_back({{a0 * p},
                    [=](const std::vector<Affine>& z) {
                      return k * z[0] + p * Affine::unknown(0, 2) + (p * p) * Affine::unknown(1, 2);
                    },
                    "s = " + std::to_string(p)});
  }
  TransformSolution t = solve_with_linear_constants(eq, cons, opts);
  const auto [c0, p0] = chi_psi(B, T, 0.0);
  const auto [dc, dp] = chi_psi_deriv(B, T, 0.0);
  const double hd = dc.real() / c0.real() - 1.0 / l1 + 1.0 / l0 + (1.0 + l1 * dp.real()) / (l1 * (1.0 - p0.real()));
  const double Ld = t.constants[0].real() / (l0 * l1 * (1.0 - p0.real()));
  const double EW = -(hd + Ld) / (1.0 - a0);
  const double P0 = t.constants[1].real();
  return detail::finish(std::move(t), P0, EW, grid);
}

inline void validate(const GeneralDep& m) {
  detail::need_range(m.a, 0.0, 1.0, "model.a");
  validate(m.B, "model.B");
  validate(m.chi, "model.chi");
  validate_probs(m.probs, "model.probs");
  if (m.psi.size() != m.probs.size()) throw ConfigError("model.psi", "length must match probs");
  for (const auto& p : m.psi) {
    if (!(p.coef >= 0.0)) throw ConfigError("model.psi.coef", "must be nonnegative");
    if (p.kind == PsiSpec::Kind::compound_poisson) validate(p.H, "model.psi.H");
  }
}

inline cplx psi_eval(const PsiSpec& p, cplx s) {
  if (p.kind == PsiSpec::Kind::linear) return p.coef * s;
  return p.coef * (1.0 - lst_eval(p.H, s));
}

/// Single branch with weight chi(-s) sum_i p_i phi_B(s + psi_i(-s)); K constants
/// from cancellation at the poles lambda_k of chi(-s).
inline PerfMetrics solve_general_dependence(const GeneralDep& m, const SolveOptions& opts = {},
                                            const std::vector<double>& grid = default_grid()) {
  validate(m);
  for (const auto& p : m.psi)
    if (p.kind == PsiSpec::Kind::compound_poisson && p.coef > 0.0)
      throw UnsupportedError("compound-Poisson psi puts poles of the weight in Re(s) > 0; simulate instead");
  auto rf = rational_form(m.chi);
  if (!rf) throw ConfigError("model.chi", "needs a rational transform");
  std::vector<cplx> lam;
  for (const cplx& pole : rf->poles) lam.push_back(-pole);
  const std::size_t K = lam.size();
  const auto num = rf->num;
  auto chi_minus = [=](cplx s) {
    cplx d = 1.0;
    for (const cplx& l : lam) d *= l - s;
    return detail::horner(num, -s) / d;
  };
  auto mix = [=](cplx s) {
    cplx v = 0.0;
    for (std::size_t i = 0; i < m.psi.size(); ++i) v += m.probs[i] * lst_eval(m.B, s + psi_eval(m.psi[i], -s));
    return v;
  };
  FunctionalEquation eq;
  eq.branches.push_back({[=](cplx s) { return chi_minus(s) * mix(s); }, {m.a, 0.0}});
  for (std::size_t j = 1; j <= K; ++j)
    eq.inhom_basis.push_back([=](cplx s) {
      cplx d = 1.0;
      for (const cplx& l : lam) d *= l - s;
      return std::pow(s, double(j)) / d;
    });
  eq.poles = lam;
  std::vector<Constraint> cons;
  for (std::size_t k = 0; k < K; ++k) {
    const cplx lk = lam[k];
    const cplx coef = detail::horner(num, -lk) * mix(lk);
    cons.push_back({{m.a * lk},
                    [=](const std::vector<Affine>& z) {
                      Affine rel = coef * z[0];
                      for (std::size_t j = 1; j <= K; ++j) rel.c[j - 1] += std::pow(lk, double(j));
                      return rel;
                    },
                    "s = lambda_" + std::to_string(k + 1)});
  }
  TransformSolution t = solve_with_linear_constants(eq, cons, opts);
  // Z'(0)(1 - a) = w'(0) + sum_j C_j Psi_j'(0); only Psi_1 has a linear term
  double dpsi = 0.0;
  for (std::size_t i = 0; i < m.psi.size(); ++i) {
    const auto& p = m.psi[i];
    dpsi += m.probs[i] * (p.kind == PsiSpec::Kind::linear ? p.coef : p.coef * mean(p.H));
  }
  const double wd = mean(m.chi) - mean(m.B) * (1.0 - dpsi);
  cplx lprod = 1.0;
  for (const cplx& l : lam) lprod *= l;
  const double Ld = (t.constants[0] / lprod).real();
  const double EW = -(wd + Ld) / (1.0 - m.a);
  const double P0 = ((K % 2 ? -1.0 : 1.0) * t.constants[K - 1]).real();
  return detail::finish(std::move(t), P0, EW, grid);
}

inline void validate(const ModelSpec& m) {
  std::visit([](const auto& x) { validate(x); }, m);
}

/// The analytic route each model takes by default.
inline PerfMetrics solve_model(const ModelSpec& spec, const SolveOptions& opts = {},
                               const std::vector<double>& grid = default_grid()) {
  return std::visit(
      [&](const auto& m) -> PerfMetrics {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PropService>) {
          if (std::holds_alternative<Exponential>(m.J)) return solve_prop_service(m, opts, grid);
          return solve_prop_service_hyper(m, opts, grid);
        } else if constexpr (std::is_same_v<T, MixedDelay>) {
          return solve_mixed_delay(m, opts, grid);
        } else if constexpr (std::is_same_v<T, SystemTime>) {
          return solve_system_time(m, opts, grid);
        } else if constexpr (std::is_same_v<T, WaitDepService>) {
          return solve_wait_dep_service(m, opts, grid);
        } else if constexpr (std::is_same_v<T, Threshold>) {
          if (m.a1 == 1.0) return solve_threshold_cutoff(m, opts, grid);
          if (m.a0 == m.a1) return solve_threshold_equal_a(m, opts, grid);
          return solve_threshold(m, opts, grid);
        } else {
          return solve_general_dependence(m, opts, grid);
        }
      },
      spec);
}

}  // namespace reflectar
