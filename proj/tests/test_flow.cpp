#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "l1flow/common.hpp"
#include "l1flow/flow.hpp"

using namespace l1flow;

namespace {

constexpr double kPi = std::numbers::pi;

const Check* find_check(const Report& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return &c;
  return nullptr;
}

const FlowTrace& sin_run() {
  static const FlowTrace trace = [] {
    const GridGeometry g{64, 1, 1.0 / 65, Boundary::dirichlet};
    const auto u0 = GridFunction::sample(g, [](double x, double) { return std::sin(kPi * x); });
    return run_flow(IntegrandSpec::quadratic(), u0, 1e-3, 0.2, 1e-10);
  }();
  return trace;
}

}  // namespace

TEST_CASE("constant data is stationary") {
  const GridGeometry g{6, 5, 0.2, Boundary::neumann};
  const auto u0 = GridFunction::constant(g, 1.5);
  const auto t = run_flow(IntegrandSpec::quadratic(), u0, 0.01, 0.05, 1e-10);
  REQUIRE_FALSE(t.aborted);
  CHECK(t.steps.size() == 6);
  for (const auto& s : t.steps) {
    CHECK(s.lambda == 0.0);
    CHECK(sup_distance(s.u, u0) == 0.0);
  }
  CHECK(check_speed(t, 1e-8).pass());
  CHECK(dissipation_report(t, 1e-8).pass());
  CHECK(strong_convexity_report(t, 1.0, 1e-8).pass());
  CHECK(pde_residual_report(t, 1e-8).pass());
  CHECK(dirichlet_decay_report(t).pass());
}

TEST_CASE("sin data under Dirichlet conditions") {
  const auto& t = sin_run();
  REQUIRE_FALSE(t.aborted);
  CHECK(t.steps.size() == 201);
  const auto q0 = divergence(smooth_dual(t.spec, t.steps[0].u));
  const auto speed = check_speed(t, 1e-6, &q0);
  CHECK(speed.pass());
  CHECK(t.steps[1].lambda <= max_abs(q0) + 1e-6);
  CHECK(dissipation_report(t, 1e-6).pass());
  CHECK(strong_convexity_report(t, 1.0, 1e-6).pass());
  CHECK(pde_residual_report(t, 1e-6).pass());
  CHECK(dirichlet_decay_report(t, 1e-3).pass());
  CHECK(holder_report(t, 1e-9).pass());
  CHECK(trace_invariants_report(t, 1e-8).pass());

  // the harmonic limit is zero
  for (std::size_t n = 1; n < t.steps.size(); ++n) CHECK(t.steps[n].energy <= t.steps[n - 1].energy + 1e-10);
  CHECK(max_abs(t.steps.back().u.values()) < max_abs(t.steps.front().u.values()));

  // discrete H1 speed decreases for the quadratic integrand
  for (std::size_t n = 2; n < t.steps.size(); ++n)
    CHECK(gradient_distance_sq(t.steps[n].u, t.steps[n - 1].u) <=
          gradient_distance_sq(t.steps[n - 1].u, t.steps[n - 2].u) * (1 + 1e-6) + 1e-14);
}

TEST_CASE("a tenfold smaller step stays close") {
  const auto& a = sin_run();
  const GridGeometry g = a.geometry();
  const auto b = run_flow(IntegrandSpec::quadratic(), a.steps[0].u, 1e-4, 0.05, 1e-10);
  REQUIRE_FALSE(b.aborted);
  double worst = 0.0;
  for (const auto& d : compare_traces(a, b)) worst = std::max(worst, d.sup);
  CHECK(worst < 2e-2);
  (void)g;
}

TEST_CASE("interpolation") {
  const auto& t = sin_run();
  for (std::size_t n : {0UL, 7UL, 50UL}) {
    CHECK(sup_distance(interpolate(t, t.time(n), Interpolation::constant), t.steps[n].u) == 0.0);
    CHECK(sup_distance(interpolate(t, t.time(n), Interpolation::affine), t.steps[n].u) <= 1e-15);
  }
  const auto mid = interpolate(t, 10.5 * t.tau, Interpolation::affine);
  for (std::size_t i = 0; i < mid.size(); ++i)
    CHECK(mid[i] == doctest::Approx(0.5 * (t.steps[10].u[i] + t.steps[11].u[i])).epsilon(1e-14));
  CHECK(sup_distance(interpolate(t, 10.5 * t.tau, Interpolation::constant), t.steps[10].u) == 0.0);
  CHECK_THROWS_AS(interpolate(t, -0.1, Interpolation::affine), Error);
  CHECK_THROWS_AS(interpolate(t, 1.0, Interpolation::affine), Error);

  // Holder bound between interpolants
  const double c = std::sqrt(2 * t.steps[0].energy);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> d(0.0, t.time(t.last()));
  for (int k = 0; k < 100; ++k) {
    const double s = d(rng), r = d(rng);
    CHECK(l1_distance(interpolate(t, s, Interpolation::affine), interpolate(t, r, Interpolation::affine)) <=
          c * std::sqrt(t.tau + std::abs(s - r)) + 1e-12);
  }
}

TEST_CASE("negative tests on corrupted traces") {
  const auto& good = sin_run();

  auto shuffled = good;
  std::swap(shuffled.steps[3].energy, shuffled.steps[40].energy);
  CHECK_FALSE(dissipation_report(shuffled, 1e-6).pass());

  // reverse the direction of one step: s changes sign against div grad u
  auto flipped = good;
  std::vector<double> back(good.steps[5].u.size());
  for (std::size_t i = 0; i < back.size(); ++i) back[i] = 2 * good.steps[4].u[i] - good.steps[5].u[i];
  flipped.steps[5].u = good.steps[5].u.with_values(back);
  flipped.steps[6].u = flipped.steps[5].u;
  CHECK_FALSE(pde_residual_report(flipped, 1e-6).pass());

  auto faster = good;
  faster.steps[20].lambda = 2 * faster.steps[19].lambda;
  const auto sp = check_speed(faster, 1e-6);
  CHECK_FALSE(sp.pass());
  REQUIRE(find_check(sp, "multiplier-nonincreasing") != nullptr);
  CHECK(find_check(sp, "multiplier-nonincreasing")->index == 20);
}

TEST_CASE("Poincare eigenvalues") {
  const GridGeometry d1{64, 1, 1.0 / 65, Boundary::dirichlet};
  const double h = d1.h;
  CHECK(poincare_eigenvalue(d1) == doctest::Approx(4 / (h * h) * std::pow(std::sin(kPi * h / 2), 2)).epsilon(1e-9));
  const GridGeometry n1{32, 1, 1.0 / 32, Boundary::neumann};
  // smallest nonzero eigenvalue of the Neumann path Laplacian
  const double hn = n1.h;
  CHECK(poincare_eigenvalue(n1) == doctest::Approx(4 / (hn * hn) * std::pow(std::sin(kPi / (2 * 32)), 2)).epsilon(1e-8));
  const GridGeometry d2{10, 8, 0.1, Boundary::dirichlet};
  const double want = 4 / 0.01 * (std::pow(std::sin(kPi / 22), 2) + std::pow(std::sin(kPi / 18), 2));
  CHECK(poincare_eigenvalue(d2) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("H1 contraction between two runs with the same boundary data") {
  const auto& a = sin_run();
  const GridGeometry g = a.geometry();
  const auto p = GridFunction::sample(g, [](double x, double) { return 0.05 * std::sin(2 * kPi * x); });
  std::vector<double> v(g.node_count());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.steps[0].u[i] + p[i];
  const auto b = run_flow(IntegrandSpec::quadratic(), a.steps[0].u.with_values(v), 1e-3, 0.2, 1e-10);
  CHECK(h1_contraction_report(a, b, 1e-8).pass());
}

TEST_CASE("anisotropic flow on a 2D grid") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-1, 1);
  const GridGeometry g{12, 12, 1.0 / 12, Boundary::neumann};
  std::vector<double> v(g.node_count());
  for (double& x : v) x = d(rng);
  const auto t = run_flow(IntegrandSpec::aniso_norm(Norm::l1()), GridFunction(g, v), 1e-3, 0.01, 1e-10);
  REQUIRE_FALSE(t.aborted);
  CHECK(t.method == StepMethod::direct);
  CHECK(check_speed(t, 1e-6).pass());
  CHECK(dissipation_report(t, 1e-6).pass());
  CHECK(holder_report(t, 1e-9).pass());
  // rough data: the dual is only certified to the sign-inclusion level (1e-4), which bounds the slope identity
  const auto inv = trace_invariants_report(t, 1e-4);
  for (const auto& c : inv.checks) CHECK_MESSAGE(c.pass, c.name, " ", c.value, " > ", c.threshold, " at ", c.index);
}

TEST_CASE("serialization") {
  const auto& t = sin_run();
  std::stringstream js;
  write_trace_json(js, t);
  const auto back = read_trace_json(js);
  REQUIRE(back.steps.size() == t.steps.size());
  CHECK(back.tau == t.tau);
  for (std::size_t n = 0; n < t.steps.size(); n += 17) {
    CHECK(sup_distance(back.steps[n].u, t.steps[n].u) == 0.0);
    CHECK(back.steps[n].lambda == t.steps[n].lambda);
    CHECK(back.steps[n].energy == t.steps[n].energy);
  }
  for (const auto& d : compare_traces(t, back)) {
    CHECK(d.sup == 0.0);
    CHECK(d.l1 == 0.0);
  }
  std::stringstream csv;
  write_ledger_csv(csv, t);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "n,t,lambda,energy,l1_step,fenchel_gap,el_residual,q_sup");
  std::stringstream bad("{\"tau\": 1}");
  CHECK_THROWS_AS(read_trace_json(bad), Error);
}

TEST_CASE("step methods") {
  CHECK(parse_step_method("auto") == StepMethod::automatic);
  CHECK(parse_step_method("direct") == StepMethod::direct);
  CHECK_THROWS_AS(parse_step_method("newton"), Error);
  const GridGeometry g{16, 1, 1.0 / 17, Boundary::dirichlet};
  const auto u0 = GridFunction::sample(g, [](double x, double) { return x * (1 - x); });
  FlowOptions mm, direct;
  mm.method = StepMethod::mm;
  direct.method = StepMethod::direct;
  const auto a = run_flow(IntegrandSpec::quadratic(), u0, 1e-2, 0.05, 1e-11, mm);
  const auto b = run_flow(IntegrandSpec::quadratic(), u0, 1e-2, 0.05, 1e-11, direct);
  for (const auto& d : compare_traces(a, b)) CHECK(d.sup <= 1e-6);
}
