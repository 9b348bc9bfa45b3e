#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "errors.hpp"

namespace reflectar {

using cplx = std::complex<double>;

inline constexpr double pole_guard = 1e-12;

struct Exponential {
  double rate = 1.0;
};

struct HyperExponential {
  std::vector<double> weights;
  std::vector<double> rates;
};

struct Deterministic {
  double value = 0.0;
};

enum class HalfPlane { left, right };

/// LST(s) = (sum_k num[k] s^k) / prod_k (s - poles[k]).
struct RationalLST {
  std::vector<double> num;
  std::vector<cplx> poles;
  HalfPlane side = HalfPlane::left;
};

using Dist = std::variant<Exponential, HyperExponential, Deterministic, RationalLST>;

struct DiscreteMixture {
  std::vector<double> values;
  std::vector<double> probs;

  std::size_t size() const { return values.size(); }

  template <class URBG>
  std::size_t sample_index(URBG& rng) const {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return probs.size() - 1;
  }

  template <class URBG>
  double sample(URBG& rng) const { return values[sample_index(rng)]; }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m += probs[i] * values[i];
    return m;
  }
};

inline void validate_probs(const std::vector<double>& p, const std::string& what) {
  if (p.empty()) throw ConfigError(what, "empty probability list");
  double tot = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw ConfigError(what, "negative probability");
    tot += x;
  }
  if (std::abs(tot - 1.0) > 1e-12) throw ConfigError(what, "probabilities do not sum to 1");
}

inline void validate(const DiscreteMixture& m, const std::string& what = "mixture") {
  if (m.values.size() != m.probs.size()) throw ConfigError(what, "values/probs length mismatch");
  validate_probs(m.probs, what + ".probs");
}

namespace detail {

inline std::vector<cplx> poly_from_roots(const std::vector<cplx>& roots) {
  std::vector<cplx> c{1.0};
  for (const cplx& r : roots) {
    std::vector<cplx> n(c.size() + 1, 0.0);
    for (std::size_t k = 0; k < c.size(); ++k) {
      n[k + 1] += c[k];
      n[k] -= r * c[k];
    }
    c = std::move(n);
  }
  return c;
}

template <class T>
T horner(const std::vector<double>& c, T s) {
  T v = 0.0;
  for (std::size_t k = c.size(); k-- > 0;) v = v * s + c[k];
  return v;
}

inline cplx horner_deriv(const std::vector<double>& c, cplx s) {
  cplx v = 0.0;
  for (std::size_t k = c.size(); k-- > 1;) v = v * s + double(k) * c[k];
  return v;
}

}  // namespace detail

/// Mixture-of-exponentials view when the transform is one (partial fractions
/// with nonnegative weights). Used for sampling, densities and moments.
inline std::optional<HyperExponential> as_hyper(const Dist& d) {
  if (auto e = std::get_if<Exponential>(&d)) return HyperExponential{{1.0}, {e->rate}};
  if (auto h = std::get_if<HyperExponential>(&d)) return *h;
  if (auto r = std::get_if<RationalLST>(&d)) {
    HyperExponential h;
    for (std::size_t k = 0; k < r->poles.size(); ++k) {
      const cplx p = r->poles[k];
      if (std::abs(p.imag()) > 1e-14 || p.real() >= 0.0) return std::nullopt;
      cplx den = 1.0;
      for (std::size_t j = 0; j < r->poles.size(); ++j)
        if (j != k) den *= p - r->poles[j];
      if (std::abs(den) < 1e-14) return std::nullopt;
      const double res = (detail::horner(r->num, p) / den).real();
      const double mu = -p.real();
      h.weights.push_back(res / mu);
      h.rates.push_back(mu);
    }
    for (double w : h.weights)
      if (w < -1e-14) return std::nullopt;
    for (double& w : h.weights) w = std::max(w, 0.0);
    return h;
  }
  return std::nullopt;
}

inline void validate(const Dist& d, const std::string& what = "dist") {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Exponential>) {
          if (!(x.rate > 0.0) || !std::isfinite(x.rate)) throw ConfigError(what + ".rate", "must be positive");
        } else if constexpr (std::is_same_v<T, HyperExponential>) {
          if (x.weights.size() != x.rates.size()) throw ConfigError(what, "weights/rates length mismatch");
          validate_probs(x.weights, what + ".weights");
          for (double r : x.rates)
            if (!(r > 0.0)) throw ConfigError(what + ".rates", "must be positive");
        } else if constexpr (std::is_same_v<T, Deterministic>) {
          if (!(x.value >= 0.0) || !std::isfinite(x.value)) throw ConfigError(what + ".value", "must be nonnegative");
        } else {
          if (x.num.size() > x.poles.size()) throw ConfigError(what, "numerator degree must be below denominator degree");
          for (const cplx& p : x.poles) {
            const bool left = p.real() < 0.0;
            if (left != (x.side == HalfPlane::left)) throw ConfigError(what + ".poles", "pole outside declared half-plane");
          }
          cplx d0 = 1.0;
          for (const cplx& p : x.poles) d0 *= -p;
          const cplx v0 = (x.num.empty() ? 0.0 : x.num[0]) / d0;
          if (std::abs(v0 - 1.0) > 1e-12) throw ConfigError(what, "transform at 0 is not 1");
        }
      },
      d);
}

inline void check_pole(cplx s, cplx pole) {
  if (std::abs(s - pole) < pole_guard) throw PoleProximityError("evaluation point within 1e-12 of a transform pole");
}

/// E exp(-sX).
inline cplx lst_eval(const Dist& d, cplx s) {
  return std::visit(
      [&](const auto& x) -> cplx {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Exponential>) {
          check_pole(s, -x.rate);
          return x.rate / (x.rate + s);
        } else if constexpr (std::is_same_v<T, HyperExponential>) {
          cplx v = 0.0;
          for (std::size_t k = 0; k < x.rates.size(); ++k) {
            check_pole(s, -x.rates[k]);
            v += x.weights[k] * x.rates[k] / (x.rates[k] + s);
          }
          return v;
        } else if constexpr (std::is_same_v<T, Deterministic>) {
          return std::exp(-s * x.value);
        } else {
          cplx den = 1.0;
          for (const cplx& p : x.poles) {
            check_pole(s, p);
            den *= s - p;
          }
          return detail::horner(x.num, s) / den;
        }
      },
      d);
}

/// d/ds of the LST.
inline cplx lst_deriv(const Dist& d, cplx s) {
  return std::visit(
      [&](const auto& x) -> cplx {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Exponential>) {
          check_pole(s, -x.rate);
          return -x.rate / ((x.rate + s) * (x.rate + s));
        } else if constexpr (std::is_same_v<T, HyperExponential>) {
          cplx v = 0.0;
          for (std::size_t k = 0; k < x.rates.size(); ++k) {
            check_pole(s, -x.rates[k]);
            v -= x.weights[k] * x.rates[k] / ((x.rates[k] + s) * (x.rates[k] + s));
          }
          return v;
        } else if constexpr (std::is_same_v<T, Deterministic>) {
          return -x.value * std::exp(-s * x.value);
        } else {
          cplx den = 1.0, dlog = 0.0;
          for (const cplx& p : x.poles) {
            check_pole(s, p);
            den *= s - p;
            dlog += 1.0 / (s - p);
          }
          const cplx n = detail::horner(x.num, s);
          return (detail::horner_deriv(x.num, s) - n * dlog) / den;
        }
      },
      d);
}

/// E X^k, from the Taylor coefficients of the transform at 0.
inline double moment(const Dist& d, int k) {
  if (k == 0) return 1.0;
  auto fact = [](int n) { return std::tgamma(n + 1.0); };
  if (auto det = std::get_if<Deterministic>(&d)) return std::pow(det->value, k);
  if (auto r = std::get_if<RationalLST>(&d)) {
    const auto den = detail::poly_from_roots(r->poles);
    std::vector<cplx> c(k + 1, 0.0);
    for (int n = 0; n <= k; ++n) {
      cplx acc = n < int(r->num.size()) ? cplx(r->num[n]) : cplx(0.0);
      for (int j = 1; j <= n && j < int(den.size()); ++j) acc -= den[j] * c[n - j];
      c[n] = acc / den[0];
    }
    return (k % 2 ? -1.0 : 1.0) * fact(k) * c[k].real();
  }
  const auto h = *as_hyper(d);
  double m = 0.0;
  for (std::size_t i = 0; i < h.rates.size(); ++i) m += h.weights[i] * fact(k) / std::pow(h.rates[i], k);
  return m;
}

inline double mean(const Dist& d) { return moment(d, 1); }

inline bool samplable(const Dist& d) {
  return !std::holds_alternative<RationalLST>(d) || as_hyper(d).has_value();
}

template <class URBG>
double sample(const Dist& d, URBG& rng) {
  if (auto e = std::get_if<Exponential>(&d)) return std::exponential_distribution<double>(e->rate)(rng);
  if (auto det = std::get_if<Deterministic>(&d)) return det->value;
  auto h = as_hyper(d);
  if (!h) throw UnsupportedError("no sampler for a general rational transform");
  DiscreteMixture phase{h->rates, h->weights};
  return std::exponential_distribution<double>(phase.sample(rng))(rng);
}

namespace detail {

inline double pdf(const HyperExponential& h, double x) {
  double v = 0.0;
  for (std::size_t k = 0; k < h.rates.size(); ++k) v += h.weights[k] * h.rates[k] * std::exp(-h.rates[k] * x);
  return v;
}

inline double sf(const HyperExponential& h, double x) {
  double v = 0.0;
  for (std::size_t k = 0; k < h.rates.size(); ++k) v += h.weights[k] * std::exp(-h.rates[k] * x);
  return v;
}

/// Point beyond which the survival function is below eps.
inline double tail_point(const HyperExponential& h, double eps) {
  double u = 0.0;
  for (std::size_t k = 0; k < h.rates.size(); ++k)
    if (h.weights[k] > 0.0) u = std::max(u, std::log(std::max(h.weights[k], eps) / eps) / h.rates[k]);
  return u;
}

/// Integral of f over [a,b] by adaptive Gauss-Kronrod, absolute tolerance 1e-10.
template <class F>
cplx gk(F f, double a, double b) {
  if (!(b > a)) return 0.0;
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  double err_re = 0.0, err_im = 0.0;
  const double re = GK::integrate([&](double x) { return f(x).real(); }, a, b, 20, 1e-13, &err_re);
  const double im = GK::integrate([&](double x) { return f(x).imag(); }, a, b, 20, 1e-13, &err_im);
  if (err_re > 1e-10 || err_im > 1e-10) throw QuadratureError("Gauss-Kronrod did not reach 1e-10");
  return {re, im};
}

inline HyperExponential need_hyper(const Dist& d) {
  auto h = as_hyper(d);
  if (!h) throw UnsupportedError("threshold kernels need a mixture-of-exponentials or deterministic law");
  return *h;
}

/// Shared body of chi_psi and its derivative; `pw` is the power of (-x) in the integrand.
inline std::pair<cplx, cplx> chi_psi_impl(const Dist& B, const Dist& T, cplx s, int pw) {
  auto wgt = [&](double x) { return pw == 0 ? 1.0 : -x; };
  const auto* bd = std::get_if<Deterministic>(&B);
  const auto* td = std::get_if<Deterministic>(&T);
  if (bd && td) {
    const double b = bd->value, t = td->value;
    if (b < t) return {wgt(b) * std::exp(-s * b), 0.0};
    return {0.0, wgt(t) * std::exp(-s * t)};
  }
  if (bd) {
    const auto ht = need_hyper(T);
    const double b = bd->value;
    const cplx chi = wgt(b) * std::exp(-s * b) * sf(ht, b);
    const cplx psi = gk([&](double x) { return wgt(x) * std::exp(-s * x) * pdf(ht, x); }, 0.0, b);
    return {chi, psi};
  }
  const auto hb = need_hyper(B);
  if (td) {
    const double t = td->value;
    const cplx chi = gk([&](double x) { return wgt(x) * std::exp(-s * x) * pdf(hb, x); }, 0.0, t);
    const cplx psi = wgt(t) * std::exp(-s * t) * sf(hb, t);
    return {chi, psi};
  }
  const auto ht = need_hyper(T);
  const double upper = std::min(tail_point(hb, 1e-15), tail_point(ht, 1e-15)) + 1.0;
  const cplx chi = gk([&](double x) { return wgt(x) * std::exp(-s * x) * pdf(hb, x) * sf(ht, x); }, 0.0, upper);
  const cplx psi = gk([&](double x) { return wgt(x) * std::exp(-s * x) * pdf(ht, x) * sf(hb, x); }, 0.0, upper);
  return {chi, psi};
}

}  // namespace detail

/// (E[e^{-sB}; B<T], E[e^{-sT}; B>=T]) for independent B, T.
inline std::pair<cplx, cplx> chi_psi(const Dist& B, const Dist& T, cplx s) {
  const auto* be = std::get_if<Exponential>(&B);
  if (be) {
    const double mu = be->rate;
    if (auto te = std::get_if<Exponential>(&T)) {
      const cplx den = mu + te->rate + s;
      check_pole(s, -(mu + te->rate));
      return {mu / den, te->rate / den};
    }
    if (auto td = std::get_if<Deterministic>(&T)) {
      const double t = td->value;
      const cplx e = std::exp(-(mu + s) * t);
      if (std::abs(mu + s) < pole_guard) return {mu * t, e};
      return {mu / (mu + s) * (1.0 - e), e};
    }
  }
  return detail::chi_psi_impl(B, T, s, 0);
}

/// Derivatives (chi'(s), psi'(s)).
inline std::pair<cplx, cplx> chi_psi_deriv(const Dist& B, const Dist& T, cplx s) {
  const auto* be = std::get_if<Exponential>(&B);
  if (be) {
    const double mu = be->rate;
    if (auto te = std::get_if<Exponential>(&T)) {
      const cplx den = mu + te->rate + s;
      return {-mu / (den * den), -te->rate / (den * den)};
    }
    if (auto td = std::get_if<Deterministic>(&T)) {
      const double t = td->value;
      const cplx m = mu + s;
      const cplx e = std::exp(-m * t);
      return {-mu / (m * m) * (1.0 - e) + mu / m * t * e, -t * e};
    }
  }
  return detail::chi_psi_impl(B, T, s, 1);
}

/// Quadrature path only; exposed so tests can compare against the closed forms.
inline std::pair<cplx, cplx> chi_psi_quadrature(const Dist& B, const Dist& T, cplx s) {
  return detail::chi_psi_impl(B, T, s, 0);
}

/// Numerator coefficients and poles of a rational transform, if it is one.
struct RationalForm {
  std::vector<double> num;
  std::vector<cplx> poles;
};

inline std::optional<RationalForm> rational_form(const Dist& d) {
  if (auto r = std::get_if<RationalLST>(&d)) return RationalForm{r->num, r->poles};
  if (std::holds_alternative<Deterministic>(d)) return std::nullopt;
  const auto h = *as_hyper(d);
  RationalForm f;
  for (double r : h.rates) f.poles.push_back(-r);
  // num = sum_k w_k mu_k prod_{j != k} (s + mu_j)
  std::vector<double> num(h.rates.size(), 0.0);
  for (std::size_t k = 0; k < h.rates.size(); ++k) {
    std::vector<cplx> others;
    for (std::size_t j = 0; j < h.rates.size(); ++j)
      if (j != k) others.push_back(-h.rates[j]);
    const auto c = detail::poly_from_roots(others);
    for (std::size_t i = 0; i < c.size(); ++i) num[i] += h.weights[k] * h.rates[k] * c[i].real();
  }
  f.num = std::move(num);
  return f;
}

}  // namespace reflectar
