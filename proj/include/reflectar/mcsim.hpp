#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "dists.hpp"
#include "errors.hpp"
#include "models.hpp"
#include "retrial.hpp"

namespace reflectar {

struct SimConfig {
  int replications = 64;
  long horizon = 100000;
  long burn_in = 10000;
  std::uint64_t seed = 1;
  std::vector<double> s_grid = default_grid();
  int threads = 1;
};

inline void validate(const SimConfig& c) {
  if (c.replications < 2) throw ConfigError("sim.replications", "need at least 2 replications for a standard error");
  if (c.horizon < 1) throw ConfigError("sim.horizon", "must be positive");
  if (c.burn_in < 0 || c.burn_in >= c.horizon) throw ConfigError("sim.burn_in", "must lie in [0, horizon)");
  if (c.s_grid.empty()) throw ConfigError("sim.s_grid", "must not be empty");
  if (c.threads < 1) throw ConfigError("threads", "must be >= 1");
}

struct SimEstimate {
  cplx mean = 0.0;
  double std_error = 0.0;
  long n = 0;
  std::uint64_t seed = 0;
};

/// W' = [V W + B - A]^+ with V from a (possibly signed) mixture or uniform on [lo, hi].
struct UniformV {
  double lo = 0.0, hi = 1.0;
};

struct RawSpec {
  std::variant<DiscreteMixture, UniformV> V = UniformV{};
  Dist B = Exponential{1.0};
  Dist A = Exponential{1.5};
};

struct WaitingEstimate {
  std::vector<std::pair<double, SimEstimate>> Z;
  SimEstimate P0, EW;
  std::vector<std::string> warnings;
};

struct OrbitEstimate {
  std::vector<std::pair<double, SimEstimate>> f;
  SimEstimate mean, empty;
  SimEstimate S0;  ///< sum_i p_i f(abar_i), from the same paths
  std::vector<std::string> warnings;
};

struct PriorityEstimate {
  std::vector<std::pair<double, SimEstimate>> F0;     ///< F(0, z2)
  std::vector<std::pair<double, SimEstimate>> Fdiag;  ///< F(z, z)
  SimEstimate EX1, EX2, F00, S0;
  std::vector<std::string> warnings;
};

namespace detail {

using Rng = std::mt19937_64;

/// Independent stream per (seed, replication).
inline Rng replication_rng(std::uint64_t seed, std::uint64_t rep) {
  std::seed_seq sq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(rep), std::uint32_t(rep >> 32),
                   0x5eedu};
  return Rng(sq);
}

/// Runs body(rep) for every replication on `threads` workers; results land at index rep.
template <class R>
std::vector<R> run_replications(const SimConfig& cfg, const std::function<R(int)>& body) {
  std::vector<R> out(cfg.replications);
  const int T = std::max(1, std::min(cfg.threads, cfg.replications));
  if (T == 1) {
    for (int r = 0; r < cfg.replications; ++r) out[r] = body(r);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(T);
  for (int t = 0; t < T; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int r = t; r < cfg.replications; r += T) out[r] = body(r);
      } catch (...) {
        errs[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Mean and standard error across replications, reduced in replication order.
inline SimEstimate combine(const std::vector<cplx>& per_rep, long n, std::uint64_t seed) {
  SimEstimate e;
  e.n = n;
  e.seed = seed;
  const double R = double(per_rep.size());
  for (const cplx& v : per_rep) e.mean += v;
  e.mean /= R;
  double ss = 0.0;
  for (const cplx& v : per_rep) ss += std::norm(v - e.mean);
  e.std_error = std::sqrt(ss / (R - 1.0) / R);
  return e;
}

inline std::vector<cplx> column(const std::vector<std::vector<cplx>>& reps, std::size_t k) {
  std::vector<cplx> c;
  for (const auto& r : reps) c.push_back(r[k]);
  return c;
}

/// Warns when first- and second-half means differ by more than 3 combined standard errors.
inline void stationarity_check(const std::vector<cplx>& first, const std::vector<cplx>& second, const char* what,
                               std::vector<std::string>& warnings) {
  const auto a = combine(first, 0, 0), b = combine(second, 0, 0);
  const double se = std::hypot(a.std_error, b.std_error);
  if (std::abs(a.mean - b.mean) > 3.0 * se && se > 0.0)
    warnings.push_back(std::string("stationarity: first/second half means of ") + what + " differ by more than 3 se");
}

inline double pos(double x) { return x > 0.0 ? x : 0.0; }

using Stepper = std::function<double(double, Rng&)>;

inline double sample_V(const std::variant<DiscreteMixture, UniformV>& V, Rng& rng) {
  if (auto m = std::get_if<DiscreteMixture>(&V)) return m->sample(rng);
  const auto& u = std::get<UniformV>(V);
  return std::uniform_real_distribution<double>(u.lo, u.hi)(rng);
}

inline void need_samplable(const Dist& d, const std::string& key) {
  if (!samplable(d)) throw UnsupportedError(key + ": no sampler for this distribution");
}

inline Stepper stepper(const RawSpec& m) {
  need_samplable(m.B, "B");
  need_samplable(m.A, "A");
  return [m](double w, Rng& rng) { return pos(sample_V(m.V, rng) * w + sample(m.B, rng) - sample(m.A, rng)); };
}

inline Stepper stepper(const ModelSpec& spec) {
  return std::visit(
      [](const auto& m) -> Stepper {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PropService>) {
          need_samplable(m.B, "model.B");
          need_samplable(m.J, "model.J");
          return [m](double w, Rng& rng) {
            const double beta = m.G.sample(rng);
            return pos(m.a * w + (1.0 - beta) * sample(m.B, rng) - sample(m.J, rng));
          };
        } else if constexpr (std::is_same_v<T, MixedDelay>) {
          need_samplable(m.B, "model.B");
          need_samplable(m.Jplus, "model.Jplus");
          need_samplable(m.Jminus, "model.Jminus");
          return [m](double w, Rng& rng) {
            const double c = m.c.sample(rng);
            const double b = sample(m.B, rng);
            const bool plus = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < m.p;
            const double j = plus ? sample(m.Jplus, rng) : -sample(m.Jminus, rng);
            return pos(m.a * w + b - pos(c * b + j));
          };
        } else if constexpr (std::is_same_v<T, SystemTime>) {
          need_samplable(m.B, "model.B");
          return [m](double w, Rng& rng) {
            const double beta = m.G.sample(rng);
            const double b = sample(m.B, rng);
            const double j = std::exponential_distribution<double>(m.delta)(rng);
            return pos((1.0 - m.eps * beta) * (w + b) - j);
          };
        } else if constexpr (std::is_same_v<T, WaitDepService>) {
          return [m](double w, Rng& rng) {
            const double om = m.Omega.sample(rng);
            const double b = std::exponential_distribution<double>(m.mu)(rng);
            const double a = m.lambda > 0.0 ? std::exponential_distribution<double>(m.lambda)(rng) : INFINITY;
            return pos(w + pos(b - om * w) - a);
          };
        } else if constexpr (std::is_same_v<T, Threshold>) {
          need_samplable(m.B, "model.B");
          need_samplable(m.T, "model.T");
          return [m](double w, Rng& rng) {
            const double b = sample(m.B, rng), t = sample(m.T, rng);
            if (b < t) return pos(m.a0 * w + b - std::exponential_distribution<double>(m.lambda0)(rng));
            return pos(m.a1 * w + t - std::exponential_distribution<double>(m.lambda1)(rng));
          };
        } else {
          need_samplable(m.B, "model.B");
          need_samplable(m.chi, "model.chi");
          for (const auto& p : m.psi)
            if (p.kind == PsiSpec::Kind::compound_poisson) need_samplable(p.H, "model.psi.H");
          DiscreteMixture pick{std::vector<double>(m.psi.size(), 0.0), m.probs};
          return [m, pick](double w, Rng& rng) {
            const double b = sample(m.B, rng);
            const auto& p = m.psi[pick.sample_index(rng)];
            double a = sample(m.chi, rng);
            if (p.kind == PsiSpec::Kind::linear) {
              a += p.coef * b;
            } else if (p.coef * b > 0.0) {
              const long k = std::poisson_distribution<long>(p.coef * b)(rng);
              for (long i = 0; i < k; ++i) a += sample(p.H, rng);
            }
            return pos(m.a * w + b - a);
          };
        }
      },
      spec);
}

inline WaitingEstimate sim_waiting_impl(const Stepper& step, const SimConfig& cfg) {
  validate(cfg);
  const std::size_t G = cfg.s_grid.size();
  // per replication: Z on grid, P0, EW, then first/second half EW
  const auto reps = run_replications<std::vector<cplx>>(cfg, [&](int r) {
    Rng rng = replication_rng(cfg.seed, std::uint64_t(r));
    double w = 0.0;
    for (long n = 0; n < cfg.burn_in; ++n) w = step(w, rng);
    const long N = cfg.horizon - cfg.burn_in, half = N / 2;
    std::vector<double> zs(G, 0.0);
    double zero = 0.0, sw = 0.0, sw1 = 0.0;
    for (long n = 0; n < N; ++n) {
      w = step(w, rng);
      for (std::size_t k = 0; k < G; ++k) zs[k] += std::exp(-cfg.s_grid[k] * w);
      if (w == 0.0) zero += 1.0;
      sw += w;
      if (n + 1 == half) sw1 = sw;
    }
    std::vector<cplx> v;
    for (double z : zs) v.push_back(z / double(N));
    v.push_back(zero / double(N));
    v.push_back(sw / double(N));
    v.push_back(sw1 / double(std::max(half, 1L)));
    v.push_back((sw - sw1) / double(std::max(N - half, 1L)));
    return v;
  });
  const long n = long(cfg.replications) * (cfg.horizon - cfg.burn_in);
  WaitingEstimate out;
  for (std::size_t k = 0; k < G; ++k) out.Z.emplace_back(cfg.s_grid[k], combine(column(reps, k), n, cfg.seed));
  out.P0 = combine(column(reps, G), n, cfg.seed);
  out.EW = combine(column(reps, G + 1), n, cfg.seed);
  stationarity_check(column(reps, G + 2), column(reps, G + 3), "W", out.warnings);
  return out;
}

}  // namespace detail

/// Long-run averages of e^{-sW}, 1(W = 0) and W along the recursion, per replication.
inline WaitingEstimate sim_waiting(const ModelSpec& m, const SimConfig& cfg) {
  return detail::sim_waiting_impl(detail::stepper(m), cfg);
}

inline WaitingEstimate sim_waiting(const RawSpec& m, const SimConfig& cfg) {
  return detail::sim_waiting_impl(detail::stepper(m), cfg);
}

/// Estimate of sum_{n>=0} r^n E(e^{-s W_{n+1}} | W_0 = w), truncated at N with r^{N+1}/(1-r) < 1e-6;
/// the truncation bound is added to the standard error.
inline SimEstimate sim_transient(const ModelSpec& m, double r, double w, cplx s, const SimConfig& cfg) {
  validate(cfg);
  if (!(r > 0.0 && r < 1.0)) throw ConfigError("r", "must lie in (0,1)");
  int N = 0;
  while (std::pow(r, N + 1) / (1.0 - r) >= 1e-6) ++N;
  const double bias = std::pow(r, N + 1) / (1.0 - r);
  const long paths = std::max(1L, cfg.horizon / (N + 1));
  const auto step = detail::stepper(m);
  const auto reps = detail::run_replications<cplx>(cfg, [&](int rep) {
    detail::Rng rng = detail::replication_rng(cfg.seed, std::uint64_t(rep));
    cplx acc = 0.0;
    for (long p = 0; p < paths; ++p) {
      double x = w, rn = 1.0;
      for (int n = 0; n <= N; ++n) {
        x = step(x, rng);
        acc += rn * std::exp(-s * x);
        rn *= r;
      }
    }
    return acc / double(paths);
  });
  SimEstimate e = detail::combine(reps, long(cfg.replications) * paths, cfg.seed);
  e.std_error += bias;
  return e;
}

/// Orbit chain: thin, add arrivals, then the orbit head or a primary customer takes the server.
inline OrbitEstimate sim_orbit(const OrbitSpec& s, const SimConfig& cfg) {
  validate(s);
  validate(cfg);
  if (s.C_o || s.C_p || s.G_o || s.G_p)
    throw UnsupportedError("class-dependent service pgfs are not simulated");
  const std::size_t G = cfg.s_grid.size(), K = s.xi.size();
  const auto reps = detail::run_replications<std::vector<cplx>>(cfg, [&](int r) {
    detail::Rng rng = detail::replication_rng(cfg.seed, std::uint64_t(r));
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double w1 = detail::win(s.alpha1, s.lambda1), w0 = detail::win(s.alpha0, s.lambda0);
    long x = 0;
    auto step = [&] {
      long l;
      double w;
      if (x > 0) {
        const double a = s.xi.sample(rng);
        l = std::binomial_distribution<long>(x, a)(rng) + pgf_sample(s.C, rng);
        w = w1;
      } else {
        l = pgf_sample(s.G, rng);
        w = w0;
      }
      const long q = (l > 0 && U(rng) < w) ? 1 : 0;
      x = l - q;
    };
    for (long n = 0; n < cfg.burn_in; ++n) step();
    const long N = cfg.horizon - cfg.burn_in, half = N / 2;
    std::vector<double> acc(G + K, 0.0);
    double mean = 0.0, m1 = 0.0, empty = 0.0;
    for (long n = 0; n < N; ++n) {
      step();
      for (std::size_t k = 0; k < G; ++k) acc[k] += std::pow(cfg.s_grid[k], double(x));
      for (std::size_t i = 0; i < K; ++i) acc[G + i] += std::pow(1.0 - s.xi.values[i], double(x));
      mean += double(x);
      if (x == 0) empty += 1.0;
      if (n + 1 == half) m1 = mean;
    }
    std::vector<cplx> v;
    for (std::size_t k = 0; k < G; ++k) v.push_back(acc[k] / double(N));
    double S0 = 0.0;
    for (std::size_t i = 0; i < K; ++i) S0 += s.xi.probs[i] * acc[G + i] / double(N);
    v.push_back(S0);
    v.push_back(mean / double(N));
    v.push_back(empty / double(N));
    v.push_back(m1 / double(std::max(half, 1L)));
    v.push_back((mean - m1) / double(std::max(N - half, 1L)));
    return v;
  });
  const long n = long(cfg.replications) * (cfg.horizon - cfg.burn_in);
  OrbitEstimate out;
  for (std::size_t k = 0; k < G; ++k) out.f.emplace_back(cfg.s_grid[k], detail::combine(detail::column(reps, k), n, cfg.seed));
  out.S0 = detail::combine(detail::column(reps, G), n, cfg.seed);
  out.mean = detail::combine(detail::column(reps, G + 1), n, cfg.seed);
  out.empty = detail::combine(detail::column(reps, G + 2), n, cfg.seed);
  detail::stationarity_check(detail::column(reps, G + 3), detail::column(reps, G + 4), "orbit size", out.warnings);
  return out;
}

/// Priority chain: the primary queue is served first; the orbit is served only when it is empty,
/// after a race between a new arrival (rate lambda1 + lambda2) and a retrieval (rate alpha).
inline PriorityEstimate sim_priority(const PrioritySpec& s, const SimConfig& cfg) {
  validate(s);
  validate(cfg);
  const std::size_t G = cfg.s_grid.size(), K = s.xi.size();
  const double lam = s.lambda1 + s.lambda2;
  const auto reps = detail::run_replications<std::vector<cplx>>(cfg, [&](int r) {
    detail::Rng rng = detail::replication_rng(cfg.seed, std::uint64_t(r));
    std::uniform_real_distribution<double> U(0.0, 1.0);
    long x1 = 0, x2 = 0;
    auto step = [&] {
      const auto [a1, a2] = pgf_sample(s.A, rng);
      if (x1 + a1 > 0) {
        x1 = x1 + a1 - 1;
        x2 += a2;
      } else if (U(rng) < lam / (lam + s.alpha)) {
        x1 = 0;
        x2 += a2;
      } else {
        const double a = s.xi.sample(rng);
        const long l = std::binomial_distribution<long>(x2, a)(rng) + a2;
        x1 = 0;
        x2 = l > 0 ? l - 1 : 0;
      }
    };
    for (long n = 0; n < cfg.burn_in; ++n) step();
    const long N = cfg.horizon - cfg.burn_in, half = N / 2;
    std::vector<double> f0(G, 0.0), fd(G, 0.0), fa(K, 0.0);
    double e1 = 0.0, e2 = 0.0, f00 = 0.0, h2 = 0.0;
    for (long n = 0; n < N; ++n) {
      step();
      e1 += double(x1);
      e2 += double(x2);
      for (std::size_t k = 0; k < G; ++k) fd[k] += std::pow(cfg.s_grid[k], double(x1 + x2));
      if (x1 == 0) {
        for (std::size_t k = 0; k < G; ++k) f0[k] += std::pow(cfg.s_grid[k], double(x2));
        for (std::size_t i = 0; i < K; ++i) fa[i] += std::pow(1.0 - s.xi.values[i], double(x2));
        if (x2 == 0) f00 += 1.0;
      }
      if (n + 1 == half) h2 = e2;
    }
    std::vector<cplx> v;
    for (double x : f0) v.push_back(x / double(N));
    for (double x : fd) v.push_back(x / double(N));
    double S0 = 0.0;
    for (std::size_t i = 0; i < K; ++i) S0 += s.xi.probs[i] * fa[i] / double(N);
    v.push_back(e1 / double(N));
    v.push_back(e2 / double(N));
    v.push_back(f00 / double(N));
    v.push_back(S0);
    v.push_back(h2 / double(std::max(half, 1L)));
    v.push_back((e2 - h2) / double(std::max(N - half, 1L)));
    return v;
  });
  const long n = long(cfg.replications) * (cfg.horizon - cfg.burn_in);
  PriorityEstimate out;
  for (std::size_t k = 0; k < G; ++k) {
    out.F0.emplace_back(cfg.s_grid[k], detail::combine(detail::column(reps, k), n, cfg.seed));
    out.Fdiag.emplace_back(cfg.s_grid[k], detail::combine(detail::column(reps, G + k), n, cfg.seed));
  }
  out.EX1 = detail::combine(detail::column(reps, 2 * G), n, cfg.seed);
  out.EX2 = detail::combine(detail::column(reps, 2 * G + 1), n, cfg.seed);
  out.F00 = detail::combine(detail::column(reps, 2 * G + 2), n, cfg.seed);
  out.S0 = detail::combine(detail::column(reps, 2 * G + 3), n, cfg.seed);
  detail::stationarity_check(detail::column(reps, 2 * G + 4), detail::column(reps, 2 * G + 5), "orbit size",
                             out.warnings);
  return out;
}

}  // namespace reflectar
