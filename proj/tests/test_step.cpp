#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "l1flow/common.hpp"
#include "l1flow/step.hpp"

using namespace l1flow;

namespace {

GridFunction random_1d(int n, Boundary bc, std::mt19937& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  const GridGeometry g{n, 1, bc == Boundary::dirichlet ? 1.0 / (n + 1) : 1.0 / n, bc};
  std::vector<double> v(g.node_count()), gh(g.ghost_count());
  for (double& x : v) x = d(rng);
  for (double& x : gh) x = d(rng);
  return GridFunction(g, v, gh);
}

double objective(const IntegrandSpec& spec, const GridFunction& u, const GridFunction& v, double tau) {
  const double m = l1_distance(u, v);
  return eval_energy(spec, u) + m * m / (2 * tau);
}

const Check& find(const StepVerification& v, const std::string& name) {
  const auto it = std::find_if(v.checks.begin(), v.checks.end(), [&](const Check& c) { return c.name == name; });
  REQUIRE(it != v.checks.end());
  return *it;
}

}  // namespace

TEST_CASE("inner solve limits") {
  std::mt19937 rng(1);
  const auto quad = IntegrandSpec::quadratic();
  const auto v = random_1d(16, Boundary::neumann, rng);

  const auto zero = inner_solve(quad, v, 0.0, 1e-10);
  // the gap tolerance is relative to 1 + Phi(v)
  CHECK(eval_energy(quad, zero.u) <= 1e-10 * (1 + eval_energy(quad, v)));

  // lambda above ||q||_inf of a certified subgradient at v keeps v
  const double qsup = max_abs(divergence(smooth_dual(quad, v)));
  const auto big = inner_solve(quad, v, 1.01 * qsup, 1e-12);
  CHECK(sup_distance(big.u, v) <= 1e-7);
}

TEST_CASE("stationary steps") {
  const auto quad = IntegrandSpec::quadratic();
  const GridGeometry neu{10, 1, 0.1, Boundary::neumann};
  const auto c = GridFunction::constant(neu, 2.5);
  for (const auto& r : {mm_step(quad, c, 0.1, 1e-10), direct_step(quad, c, 0.1, 1e-10)}) {
    CHECK(r.lambda == 0.0);
    CHECK(sup_distance(r.u, c) <= 1e-12);
  }
  const auto st = mm_step(quad, c, 0.1, 1e-10);
  const auto ver = verify_step(quad, c, st, 0.1);
  CHECK(ver.all_pass());
  for (const auto& ch : ver.checks) CHECK(std::abs(ch.value) <= 1e-12);

  const GridGeometry dir{15, 1, 1.0 / 16, Boundary::dirichlet};
  const auto lin = GridFunction::sample(dir, [](double x, double) { return 2 * x - 0.5; });
  const auto r = mm_step(quad, lin, 0.05, 1e-10);
  CHECK(r.lambda <= 1e-9);
  CHECK(sup_distance(r.u, lin) <= 1e-9);
}

TEST_CASE("mm and direct steps agree and verify") {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> lt(std::log(1e-3), std::log(1e-1));
  for (int k = 0; k < 10; ++k) {
    const auto v = random_1d(k % 2 ? 16 : 8, k % 3 ? Boundary::dirichlet : Boundary::neumann, rng);
    const double tau = std::exp(lt(rng));
    for (const auto& spec : {IntegrandSpec::quadratic(), IntegrandSpec::power(3.0), IntegrandSpec::area(true)}) {
      const auto a = mm_step(spec, v, tau, 1e-12);
      const auto b = direct_step(spec, v, tau, 1e-12);
      CHECK(sup_distance(a.u, b.u) <= 1e-6);
      CHECK(std::abs(a.objective - b.objective) <= 1e-9 * (1 + std::abs(a.objective)));
      CHECK(a.lambda * tau == doctest::Approx(l1_distance(a.u, v)).epsilon(1e-8));
      CHECK(a.fenchel_gap >= -1e-10);
      CHECK(a.objective <= eval_energy(spec, v) + 1e-10);
      CHECK(verify_step(spec, v, a, tau).all_pass());
      CHECK(verify_step(spec, v, b, tau).all_pass());
      // the bracketing function is non-decreasing in lambda
      auto tr = a.outer_trace;
      std::sort(tr.begin(), tr.end(), [](const OuterSample& x, const OuterSample& y) { return x.lambda < y.lambda; });
      for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr[i].value >= tr[i - 1].value - 1e-8);
    }
  }
}

TEST_CASE("anisotropic steps on a 2D grid") {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  const GridGeometry g{12, 12, 1.0 / 12, Boundary::neumann};
  std::vector<double> v(g.node_count());
  for (double& x : v) x = d(rng);
  const GridFunction f(g, v);
  const auto spec = IntegrandSpec::aniso_norm(Norm::l1());
  const auto r = direct_step(spec, f, 0.01, 1e-9);
  CHECK(r.objective <= eval_energy(spec, f) + 1e-10);
  CHECK(r.lambda * 0.01 == doctest::Approx(l1_distance(r.u, f)).epsilon(1e-8));
  CHECK(verify_step(spec, f, r, 0.01).all_pass());
  const auto m = mm_step(spec, f, 0.01, 1e-9);
  CHECK(std::abs(m.objective - r.objective) <= 1e-6 * (1 + r.objective));
}

TEST_CASE("verification flags a corrupted dual") {
  std::mt19937 rng(5);
  const auto quad = IntegrandSpec::quadratic();
  const auto v = random_1d(16, Boundary::dirichlet, rng);
  auto r = mm_step(quad, v, 0.05, 1e-12);
  REQUIRE(verify_step(quad, v, r, 0.05).all_pass());
  for (double& x : r.dual.data) x *= 2.0;
  const auto bad = verify_step(quad, v, r, 0.05);
  CHECK_FALSE(bad.all_pass());
  CHECK_FALSE(find(bad, "fenchel-young").pass);
}

TEST_CASE("objective against a projected subgradient oracle") {
  // min Phi(u) + tau lambda^2/2 with ||u - v||_1 = tau lambda is the step; here the oracle minimises the
  // step objective directly by subgradient descent with diminishing steps.
  std::mt19937 rng(6);
  const auto quad = IntegrandSpec::quadratic();
  const auto v = random_1d(16, Boundary::dirichlet, rng);
  const double tau = 0.05;
  const auto r = mm_step(quad, v, tau, 1e-13);
  std::vector<double> u(v.values().begin(), v.values().end());
  double best = objective(quad, v, v, tau);
  const double h = v.geometry().h;
  for (int it = 0; it < 200000; ++it) {
    const auto f = v.with_values(u);
    const auto lap = divergence(smooth_dual(quad, f));
    const double m = l1_distance(f, v);
    std::vector<double> g(u.size());
    double gn = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double s = u[i] > v[i] ? 1.0 : (u[i] < v[i] ? -1.0 : 0.0);
      g[i] = h * (-lap[i] + m / tau * s);
      gn += g[i] * g[i];
    }
    const double step = 0.05 / std::sqrt(it + 1.0) / std::max(1.0, std::sqrt(gn));
    for (std::size_t i = 0; i < u.size(); ++i) u[i] -= step * g[i];
    best = std::min(best, objective(quad, v.with_values(u), v, tau));
  }
  CHECK(r.objective <= best + 1e-8 * (1 + std::abs(best)));
  CHECK(best - r.objective <= 1e-4 * (1 + std::abs(best)));
}
