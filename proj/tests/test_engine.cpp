#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>

#include "reflectar/engine.hpp"

using namespace reflectar;

namespace {

/// Random equation Z(s) = sum_k p_k lam_k/(lam_k + s) Z(a_k s) + f(s), f(s) = c s/(mu + s), Z(0) = 1.
struct RandomEq {
  std::vector<double> p, lam, a;
  double c, mu;

  cplx weight(std::size_t k, cplx s) const { return p[k] * lam[k] / (lam[k] + s); }
  cplx f(cplx s) const { return c * s / (mu + s); }

  FunctionalEquation equation() const {
    FunctionalEquation eq;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const RandomEq self = *this;
      eq.branches.push_back({[self, k](cplx s) { return self.weight(k, s); }, {a[k], 0.0}});
    }
    const RandomEq self = *this;
    eq.inhom_fixed = [self](cplx s) { return self.f(s); };
    return eq;
  }

  /// every path of length `depth`, with the leaf replaced by Z(0) = 1
  cplx brute(cplx s, int depth) const {
    if (depth == 0) return 1.0;
    cplx v = f(s);
    for (std::size_t k = 0; k < p.size(); ++k) v += weight(k, s) * brute(a[k] * s, depth - 1);
    return v;
  }
};

RandomEq random_eq(std::mt19937_64& rng, int branches, double amax) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  RandomEq e;
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

}  // namespace

TEST_CASE("single branch matches path enumeration", "[engine]") {
  std::mt19937_64 rng(101);
  for (int inst = 0; inst < 20; ++inst) {
    const RandomEq e = random_eq(rng, 1, 0.3);
    const auto eq = e.equation();
    for (cplx s : {cplx(0.5), cplx(2.0), cplx(1.0, 1.5)})
      CHECK(std::abs(solve_single_branch(eq, s) - e.brute(s, 25)) < 1e-10);
  }
}

TEST_CASE("two branches match path enumeration", "[engine]") {
  std::mt19937_64 rng(202);
  for (int inst = 0; inst < 20; ++inst) {
    const RandomEq e = random_eq(rng, 2, 0.22);
    const auto eq = e.equation();
    for (cplx s : {cplx(0.5), cplx(3.0, -1.0)}) CHECK(std::abs(solve_two_branch(eq, s) - e.brute(s, 18)) < 1e-10);
  }
}

TEST_CASE("commuting multi-branch matches path enumeration", "[engine]") {
  std::mt19937_64 rng(303);
  for (int inst = 0; inst < 20; ++inst) {
    const RandomEq e = random_eq(rng, 3, 0.14);
    const auto eq = e.equation();
    const cplx s(1.5, 0.5);
    CHECK(std::abs(solve_multi_branch_commuting(eq, s) - e.brute(s, 13)) < 1e-10);
  }
}

TEST_CASE("shifted map uses its own fixed point", "[engine]") {
  // Z(s) = w(s) Z(0.4 s + 0.6) + f(s); the map fixes s = 1 where Z = 2.
  const auto w = [](cplx s) { return 0.5 + 0.5 / (1.0 + (s - 1.0) * (s - 1.0)); };
  const auto f = [](cplx s) { return 0.3 * (s - 1.0); };
  std::function<cplx(cplx, int)> brute = [&](cplx s, int d) -> cplx {
    return d == 0 ? cplx(2.0) : f(s) + w(s) * brute(0.4 * s + 0.6, d - 1);
  };
  FunctionalEquation eq;
  eq.branches.push_back({w, {0.4, 0.6}});
  eq.inhom_fixed = f;
  eq.fixed_value = 2.0;
  for (cplx s : {cplx(0.0), cplx(3.0), cplx(-1.0, 2.0)}) CHECK(std::abs(solve_single_branch(eq, s) - brute(s, 40)) < 1e-10);
}

TEST_CASE("infinite product against direct products", "[engine]") {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int inst = 0; inst < 20; ++inst) {
    const double a = 0.2 + 0.6 * U(rng), b = U(rng);
    auto factor = [=](int j) { return 1.0 / (1.0 + b * std::pow(a, j)); };
    cplx direct = 1.0;
    for (int j = 0; j < 200; ++j) direct *= factor(j);
    const ProductResult r = infinite_product([&](int j) { return cplx(factor(j)); });
    CHECK(std::abs(r.value - direct) < 1e-13);
    CHECK(r.tail_bound < 1e-12);
  }
}

TEST_CASE("unknown constants from linear constraints", "[engine]") {
  // Z(s) = 1/(1+s) satisfies Z(s) = w(s) Z(s/2) + phi(s) + C psi(s) with C = 0.3
  const auto Z = [](cplx s) { return 1.0 / (1.0 + s); };
  const auto w = [](cplx s) { return 0.5 + 0.5 / (1.0 + s); };
  const auto psi = [](cplx s) { return s / (2.0 + s); };
  FunctionalEquation eq;
  eq.branches.push_back({w, {0.5, 0.0}});
  eq.inhom_fixed = [=](cplx s) { return Z(s) - w(s) * Z(0.5 * s) - 0.3 * psi(s); };
  eq.inhom_basis.push_back(psi);
  const std::vector<Constraint> cons{{{1.0}, [](const std::vector<Affine>& z) { return z[0] + cplx(-0.5); }, "Z(1)"}};
  const TransformSolution t = solve_with_linear_constants(eq, cons);
  REQUIRE(t.constants.size() == 1);
  CHECK(std::abs(t.constants[0] - 0.3) < 1e-10);
  for (cplx s : {cplx(0.25), cplx(4.0), cplx(1.0, -2.0)}) CHECK(std::abs(t.eval(s) - Z(s)) < 1e-10);
}

TEST_CASE("removable poles are crossed", "[engine]") {
  // weight and inhomogeneous term both carry k/(2 - s); residues cancel
  const auto Z = [](cplx s) { return 1.0 / (1.0 + s); };
  const auto w = [](cplx s) { return 0.5 + 0.5 / (1.0 + s) + 0.2 * s / (2.0 - s); };
  FunctionalEquation eq;
  eq.branches.push_back({w, {0.5, 0.0}});
  eq.inhom_fixed = [=](cplx s) { return Z(s) - w(s) * Z(0.5 * s); };
  eq.poles = {2.0};
  for (cplx s : {cplx(2.0), cplx(4.0), cplx(8.0)}) CHECK(std::abs(solve_single_branch(eq, s) - Z(s)) < 1e-9);
}

TEST_CASE("shift chain against a direct sum", "[engine]") {
  // one step type: S(s) = sum_n prod_{k<n} lam / (mu + s + mu k a)
  const double lam = 1.3, mu = 2.0, a = 0.7;
  for (double s : {0.0, 0.5, 3.0}) {
    double direct = 0.0, term = 1.0;
    for (int n = 0; n < 200; ++n) {
      direct += term;
      term *= lam / (mu + s + mu * n * a);
    }
    const auto r = solve_shift_chain(DiscreteMixture{{a}, {1.0}}, lam, mu, s);
    CHECK(std::abs(r.value - direct) < 1e-12 * direct);
  }
  // two step types: enumerate sequences
  const DiscreteMixture w{{0.3, 1.1}, {0.4, 0.6}};
  std::function<double(double, double, int)> rec = [&](double s, double acc, int d) -> double {
    if (d == 0) return 0.0;
    double v = 0.0;
    for (std::size_t l = 0; l < 2; ++l) {
      const double t = w.probs[l] * lam / (mu + s + mu * acc);
      v += t * (1.0 + rec(s, acc + w.values[l], d - 1));
    }
    return v;
  };
  const double s = 0.8;
  const double brute = 1.0 + rec(s, 0.0, 18);
  const auto r = solve_shift_chain(w, lam, mu, s);
  CHECK(std::abs(r.value - brute) < 1e-10);
  const double h = 1e-5;
  const double fd = (solve_shift_chain(w, lam, mu, s + h).value - solve_shift_chain(w, lam, mu, s - h).value).real() / (2 * h);
  CHECK(std::abs(r.deriv.real() - fd) < 1e-7);
}

TEST_CASE("contour helpers", "[engine]") {
  const auto f = [](cplx z) { return std::exp(z) + 1.0 / (z - 0.3); };
  // regular part at 0.3 is e^0.3
  CHECK(std::abs(circle_mean(f, 0.3, 1e-2) - std::exp(0.3)) < 1e-12);
  CHECK(std::abs(circle_derivative([](cplx z) { return std::exp(z); }, 0.5, 0.1) - std::exp(0.5)) < 1e-12);
  CHECK(std::abs(limit_at_infinity([](double s) { return 2.0 + 3.0 / s + 1.0 / (s * s); }) - 2.0) < 1e-9);
}

TEST_CASE("solver options are validated", "[engine]") {
  SolveOptions o;
  o.tail_tol = 1e2;
  try {
    validate(o);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key == "solver.tail_tol");
  }
  o.tail_tol = 1e-3;
  CHECK_NOTHROW(validate(o));
}

TEST_CASE("slow contraction reports non-convergence", "[engine]") {
  FunctionalEquation eq;
  eq.branches.push_back({[](cplx s) { return 1.0 / (1.0 + 0.1 * s); }, {0.999, 0.0}});
  eq.inhom_fixed = [](cplx s) { return 0.05 * s; };
  SolveOptions o;
  o.max_depth = 10;
  CHECK_THROWS_AS(solve_single_branch(eq, 1.0, o), NonConvergenceError);
}
