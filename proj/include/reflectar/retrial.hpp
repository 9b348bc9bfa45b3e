#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dists.hpp"
#include "engine.hpp"
#include "errors.hpp"

namespace reflectar {

/// Number of Poisson(rate) arrivals during one draw of `service`: pgf LST_service(rate (1 - z)).
struct PoissonDuringService {
  double rate = 1.0;
  Dist service = Exponential{1.0};
};

/// Explicit finite pgf, coeffs[k] = P(N = k).
struct PolynomialPgf {
  std::vector<double> coeffs{1.0};
};

using PgfSpec = std::variant<PoissonDuringService, PolynomialPgf>;

/// Two arrival streams during one service.
struct JointPoissonService {
  double rate1 = 0.3, rate2 = 0.4;
  Dist service = Exponential{2.0};
};

/// coeffs[i][j] = P(N1 = i, N2 = j)
struct JointPolynomial {
  std::vector<std::vector<double>> coeffs;
};

using JointPgfSpec = std::variant<JointPoissonService, JointPolynomial>;

inline cplx pgf_eval(const PgfSpec& p, cplx z) {
  if (auto s = std::get_if<PoissonDuringService>(&p)) return lst_eval(s->service, s->rate * (1.0 - z));
  const auto& c = std::get<PolynomialPgf>(p).coeffs;
  return detail::horner(c, z);
}

inline cplx pgf_eval(const JointPgfSpec& p, cplx z1, cplx z2) {
  if (auto s = std::get_if<JointPoissonService>(&p))
    return lst_eval(s->service, s->rate1 * (1.0 - z1) + s->rate2 * (1.0 - z2));
  const auto& c = std::get<JointPolynomial>(p).coeffs;
  cplx v = 0.0, zi = 1.0;
  for (const auto& row : c) {
    v += zi * detail::horner(row, z2);
    zi *= z1;
  }
  return v;
}

/// E N1 (which = 0) or E N2 (which = 1)
inline double joint_mean(const JointPgfSpec& p, int which) {
  if (auto s = std::get_if<JointPoissonService>(&p)) return (which ? s->rate2 : s->rate1) * mean(s->service);
  const auto& c = std::get<JointPolynomial>(p).coeffs;
  double m = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c[i].size(); ++j) m += c[i][j] * double(which ? j : i);
  return m;
}

inline void validate(const PgfSpec& p, const std::string& key) {
  if (auto s = std::get_if<PoissonDuringService>(&p)) {
    if (!(s->rate >= 0.0)) throw ConfigError(key + ".rate", "must be nonnegative");
    validate(s->service, key + ".service");
  } else {
    const auto& c = std::get<PolynomialPgf>(p).coeffs;
    if (c.empty()) throw ConfigError(key + ".coeffs", "empty");
    for (double x : c)
      if (!(x >= 0.0)) throw ConfigError(key + ".coeffs", "must be nonnegative");
  }
  if (std::abs(pgf_eval(p, 1.0) - 1.0) > 1e-12) throw ConfigError(key, "pgf must equal 1 at z = 1");
}

inline void validate(const JointPgfSpec& p, const std::string& key) {
  if (auto s = std::get_if<JointPoissonService>(&p)) {
    if (!(s->rate1 >= 0.0 && s->rate2 >= 0.0)) throw ConfigError(key, "rates must be nonnegative");
    validate(s->service, key + ".service");
  } else {
    const auto& c = std::get<JointPolynomial>(p).coeffs;
    if (c.empty()) throw ConfigError(key + ".coeffs", "empty");
    for (const auto& row : c)
      for (double x : row)
        if (!(x >= 0.0)) throw ConfigError(key + ".coeffs", "must be nonnegative");
  }
  if (std::abs(pgf_eval(p, 1.0, 1.0) - 1.0) > 1e-12) throw ConfigError(key, "pgf must equal 1 at (1,1)");
}

template <class URBG>
long pgf_sample(const PgfSpec& p, URBG& rng) {
  if (auto s = std::get_if<PoissonDuringService>(&p)) {
    const double m = s->rate * sample(s->service, rng);
    return m > 0.0 ? long(std::poisson_distribution<long>(m)(rng)) : 0L;
  }
  const auto& c = std::get<PolynomialPgf>(p).coeffs;
  return long(std::discrete_distribution<std::size_t>(c.begin(), c.end())(rng));
}

template <class URBG>
std::pair<long, long> pgf_sample(const JointPgfSpec& p, URBG& rng) {
  if (auto s = std::get_if<JointPoissonService>(&p)) {
    const double t = sample(s->service, rng);
    auto pois = [&](double m) { return m > 0.0 ? long(std::poisson_distribution<long>(m)(rng)) : 0L; };
    const long a = pois(s->rate1 * t);
    return {a, pois(s->rate2 * t)};
  }
  const auto& c = std::get<JointPolynomial>(p).coeffs;
  std::vector<double> flat;
  std::size_t width = 0;
  for (const auto& row : c) width = std::max(width, row.size());
  for (const auto& row : c)
    for (std::size_t j = 0; j < width; ++j) flat.push_back(j < row.size() ? row[j] : 0.0);
  const std::size_t k = std::discrete_distribution<std::size_t>(flat.begin(), flat.end())(rng);
  return {long(k / width), long(k % width)};
}

/// Orbit queue. C: arrivals during a service that starts with a nonempty orbit; G: with an empty one.
/// Retrieval rates may be +infinity (the orbit head always wins the race).
struct OrbitSpec {
  double lambda0 = 1.0, lambda1 = 1.0;
  double alpha0 = 2.0, alpha1 = 1.5;
  PgfSpec C = PoissonDuringService{0.6, Exponential{1.0}};
  PgfSpec G = PoissonDuringService{0.4, Exponential{1.0}};
  DiscreteMixture xi{{0.5, 0.8}, {0.4, 0.6}};
  std::optional<PgfSpec> C_o, C_p, G_o, G_p;
};

struct PrioritySpec {
  double lambda1 = 0.3, lambda2 = 0.4;
  double alpha = 1.0;
  JointPgfSpec A = JointPoissonService{0.3, 0.4, Exponential{2.0}};
  DiscreteMixture xi{{0.5, 0.8}, {0.5, 0.5}};
};

struct PgfSolution {
  /// f(z) for the orbit model; F(0, z2) for the priority model.
  std::function<cplx(cplx)> eval;
  /// F(z1, z2); priority model only.
  std::function<cplx(cplx, cplx)> eval2;
  double f0 = 0.0;  ///< f(0), or F(0,0)
  double S0 = 0.0;  ///< sum_i p_i f(abar_i), or sum_i p_i F(0, abar_i)
  std::vector<double> means;
  Diagnostics diagnostics;
};

namespace detail {

/// alpha / (lambda + alpha), with alpha = infinity allowed
inline double win(double alpha, double lambda) { return std::isinf(alpha) ? 1.0 : alpha / (lambda + alpha); }

inline void validate_xi(const DiscreteMixture& xi, bool strict) {
  validate(xi, "xi");
  for (double a : xi.values)
    if (!(a > 0.0 && (strict ? a < 1.0 : a <= 1.0)))
      throw ConfigError("xi.values", strict ? "solver needs retention probabilities in (0,1)" : "must lie in (0,1]");
}

}  // namespace detail

inline void validate(const OrbitSpec& s) {
  for (auto [v, k] : {std::pair{s.lambda0, "lambda0"}, {s.lambda1, "lambda1"}, {s.alpha0, "alpha0"}, {s.alpha1, "alpha1"}})
    if (!(v > 0.0)) throw ConfigError(std::string("model.") + k, "must be positive");
  validate(s.C, "model.C");
  validate(s.G, "model.G");
  for (auto [p, k] : {std::pair{&s.C_o, "C_o"}, {&s.C_p, "C_p"}, {&s.G_o, "G_o"}, {&s.G_p, "G_p"}})
    if (*p) validate(**p, std::string("model.") + k);
  detail::validate_xi(s.xi, false);
}

inline void validate(const PrioritySpec& s) {
  for (auto [v, k] : {std::pair{s.lambda1, "lambda1"}, {s.lambda2, "lambda2"}, {s.alpha, "alpha"}})
    if (!(v > 0.0)) throw ConfigError(std::string("model.") + k, "must be positive");
  validate(s.A, "model.A");
  detail::validate_xi(s.xi, false);
}

/// (C-hat(z), G-hat(z)): the pgfs of arrivals during a service together with the new primary customer
/// that may win the race for the server.
inline std::pair<cplx, cplx> build_hat_pgfs(const OrbitSpec& s, cplx z) {
  auto hat = [&](const PgfSpec& plain, const std::optional<PgfSpec>& o, const std::optional<PgfSpec>& p, double lam,
                 double alpha) -> cplx {
    if (std::isinf(alpha)) return pgf_eval(o ? *o : plain, z);
    const cplx co = pgf_eval(o ? *o : plain, z), cp = pgf_eval(p ? *p : plain, z);
    return (alpha * co + lam * z * cp) / (lam + alpha);
  };
  return {hat(s.C, s.C_o, s.C_p, s.lambda1, s.alpha1), hat(s.G, s.G_o, s.G_p, s.lambda0, s.alpha0)};
}

namespace detail {

struct OrbitTerms {
  OrbitSpec s;
  cplx C0, G0;
  double w0, w1;
  cplx g(cplx z) const { return build_hat_pgfs(s, z).first / z; }
  /// f0 coefficient of K(z)
  cplx k1(cplx z) const {
    const auto [Ch, Gh] = build_hat_pgfs(s, z);
    return (Gh - Ch + w0 * (z - 1.0) * G0 - w1 * (z - 1.0) * C0) / z;
  }
  /// S0 coefficient of K(z)
  cplx k2(cplx z) const { return w1 * (z - 1.0) * C0 / z; }
};

inline OrbitTerms orbit_terms(const OrbitSpec& s) {
  return {s, pgf_eval(s.C, 0.0), pgf_eval(s.G, 0.0), win(s.alpha0, s.lambda0), win(s.alpha1, s.lambda1)};
}

}  // namespace detail

/// K(z) = [f0 (G-hat - C-hat + w0 (z-1) G(0)) + w1 (z-1) C(0) (S0 - f0)] / z, w = alpha/(lambda+alpha)
inline cplx orbit_K(const OrbitSpec& s, double f0, double S0, cplx z) {
  const auto t = detail::orbit_terms(s);
  return f0 * t.k1(z) + S0 * t.k2(z);
}

/// f(z) = (C-hat(z)/z) sum_i p_i f(abar_i + a_i z) + K(z), with two unknowns f(0) and
/// S0 = sum_i p_i f(abar_i). S0 is pinned by its definition and f(0) by the regular part of
/// the representation at z = 0.
inline PgfSolution solve_orbit_pgf(const OrbitSpec& s, const SolveOptions& opts = {}) {
  validate(s);
  detail::validate_xi(s.xi, true);
  if (s.C_o || s.C_p || s.G_o || s.G_p)
    throw UnsupportedError("class-dependent service pgfs need the class of the ongoing service as extra state");
  const auto t = detail::orbit_terms(s);
  FunctionalEquation eq;
  for (std::size_t i = 0; i < s.xi.size(); ++i) {
    const double p = s.xi.probs[i], a = s.xi.values[i];
    eq.branches.push_back({[t, p](cplx z) { return p * t.g(z); }, {a, 1.0 - a}});
  }
  eq.inhom_basis.push_back([t](cplx z) { return t.k1(z); });
  eq.inhom_basis.push_back([t](cplx z) { return t.k2(z); });
  eq.fixed_value = 1.0;
  eq.poles = {0.0};
  std::vector<cplx> abar;
  for (double a : s.xi.values) abar.push_back(1.0 - a);
  const auto probs = s.xi.probs;
  std::vector<Constraint> cons{
      {{0.0}, [](const std::vector<Affine>& z) { return Affine::unknown(0, 2) - z[0]; }, "f(0)"},
      {abar,
       [probs](const std::vector<Affine>& z) {
         Affine rel = Affine::unknown(1, 2);
         for (std::size_t i = 0; i < z.size(); ++i) rel = rel - probs[i] * z[i];
         return rel;
       },
       "S0"}};
  TransformSolution ts = solve_with_linear_constants(eq, cons, opts);
  PgfSolution out;
  out.f0 = ts.constants[0].real();
  out.S0 = ts.constants[1].real();
  out.diagnostics = ts.diagnostics;
  out.eval = ts.eval;
  const double h = 1e-5;
  out.means = {((out.eval(1.0 + h) - out.eval(1.0 - h)) / (2.0 * h)).real()};
  return out;
}

/// f(z) - g(z) sum_i p_i f(abar_i + a_i z) - K(z)
inline cplx orbit_residual(const OrbitSpec& s, const PgfSolution& sol, cplx z) {
  const auto t = detail::orbit_terms(s);
  cplx sum = 0.0;
  for (std::size_t i = 0; i < s.xi.size(); ++i)
    sum += s.xi.probs[i] * sol.eval(1.0 - s.xi.values[i] + s.xi.values[i] * z);
  return sol.eval(z) - t.g(z) * sum - orbit_K(s, sol.f0, sol.S0, z);
}

namespace detail {

inline cplx root_q_impl(const JointPgfSpec& A, cplx z2) {
  cplx z = 0.0, step = 0.0;
  for (int it = 0; it < 100000; ++it) {
    const cplx zn = pgf_eval(A, z, z2);
    step = zn - z;
    z = zn;
    if (std::abs(step) < 1e-14) return z;
  }
  throw NonConvergenceError("root_q: iteration cap reached, last step " + std::to_string(std::abs(step)));
}

inline void check_not_identity(const JointPgfSpec& A) {
  bool ident = true;
  for (double z1 : {0.0, 0.3, 0.7})
    for (double z2 : {0.0, 0.5, 1.0}) ident = ident && std::abs(pgf_eval(A, z1, z2) - z1) < 1e-14;
  if (ident) throw DegenerateError("A(z1,z2) = z1: every z1 is a fixed point");
}

}  // namespace detail

/// Smallest root in [0,1] of z1 = A(z1, z2), by iterating z <- A(z, z2) from 0.
inline double root_q(const PrioritySpec& s, double z2) {
  validate(s);
  detail::check_not_identity(s.A);
  return detail::root_q_impl(s.A, z2).real();
}

/// F(0, z2) solves a single-constant equation of the orbit form with
/// g(z2) = alpha q / (z2 (alpha + lambda (1 - q))); F(z1, z2) follows from the two-dimensional relation.
inline PgfSolution solve_priority(const PrioritySpec& s, const SolveOptions& opts = {}) {
  validate(s);
  detail::validate_xi(s.xi, true);
  detail::check_not_identity(s.A);
  const JointPgfSpec A = s.A;
  const double lam = s.lambda1 + s.lambda2, al = s.alpha;
  const double rho1 = joint_mean(A, 0);
  if (!(rho1 < 1.0)) throw ConfigError("model.A", "primary queue needs E(A1) < 1");
  const double A00 = pgf_eval(A, 0.0, 0.0).real();
  const double phi1 = (1.0 - rho1) / pgf_eval(A, 0.0, 1.0).real();
  auto q = [A](cplx z) { return detail::root_q_impl(A, z); };
  auto g = [=](cplx z) {
    const cplx qz = q(z);
    return al * qz / (z * (al + lam * (1.0 - qz)));
  };
  auto l = [=](cplx z) {
    const cplx qz = q(z);
    return al * qz * A00 * (z - 1.0) / (z * pgf_eval(A, 0.0, z) * (al + lam * (1.0 - qz)));
  };
  FunctionalEquation eq;
  for (std::size_t i = 0; i < s.xi.size(); ++i) {
    const double p = s.xi.probs[i], a = s.xi.values[i];
    eq.branches.push_back({[g, p](cplx z) { return p * g(z); }, {a, 1.0 - a}});
  }
  eq.inhom_basis.push_back(l);
  eq.fixed_value = phi1;
  eq.poles = {0.0};
  std::vector<cplx> abar;
  for (double a : s.xi.values) abar.push_back(1.0 - a);
  const auto probs = s.xi.probs;
  std::vector<Constraint> cons{{abar,
                                [probs](const std::vector<Affine>& z) {
                                  Affine rel = Affine::unknown(0, 1);
                                  for (std::size_t i = 0; i < z.size(); ++i) rel = rel - probs[i] * z[i];
                                  return rel;
                                },
                                "S0"}};
  TransformSolution ts = solve_with_linear_constants(eq, cons, opts);
  PgfSolution out;
  out.S0 = ts.constants[0].real();
  out.diagnostics = ts.diagnostics;
  const auto Ft = ts.eval;
  out.eval = Ft;
  out.f0 = Ft(0.0).real();
  const double S0 = out.S0;
  const auto xi = s.xi;
  // F(z1,z2)(z1 - A(z1,z2)) = alpha A(0,z2) z1/(z2 (lam+alpha)) sum_i p_i F~(abar_i + a_i z2)
  //   - F~(z2) A(0,z2) (alpha + lam (1 - z1))/(lam+alpha) + S0 A(0,0) alpha (z2 - 1) z1/(z2 (lam+alpha))
  auto direct = [=](cplx z1, cplx z2) {
    const cplx A0 = pgf_eval(A, 0.0, z2);
    cplx sum = 0.0;
    for (std::size_t i = 0; i < xi.size(); ++i) sum += xi.probs[i] * Ft(1.0 - xi.values[i] * (1.0 - z2));
    const cplx rhs = al * A0 * z1 / (z2 * (lam + al)) * sum - Ft(z2) * A0 * (al + lam * (1.0 - z1)) / (lam + al) +
                     S0 * A00 * al * (z2 - 1.0) * z1 / (z2 * (lam + al));
    return rhs / (z1 - pgf_eval(A, z1, z2));
  };
  out.eval2 = [=](cplx z1, cplx z2) -> cplx {
    const bool bad_den = std::abs(z1 - pgf_eval(A, z1, z2)) < 1e-6;
    if (std::abs(z2) < 1e-6 || bad_den) {
      // removable: average over a circle in z2
      const double r = bad_den ? 0.2 : 1e-3;
      return circle_mean([&](cplx w) { return direct(z1, w); }, z2, r, 16);
    }
    return direct(z1, z2);
  };
  const auto F = out.eval2;
  const cplx EX1 = circle_derivative([&](cplx w) { return F(w, 1.0); }, 1.0, 0.2, 32);
  const cplx EX2 = circle_derivative([&](cplx w) { return F(1.0, w); }, 1.0, 0.2, 32);
  out.means = {EX1.real(), EX2.real()};
  return out;
}

/// |q - A(q, z2)|
inline double root_q_residual(const PrioritySpec& s, double z2) {
  const double q = root_q(s, z2);
  return std::abs(q - pgf_eval(s.A, q, z2).real());
}

}  // namespace reflectar
