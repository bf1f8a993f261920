#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "l1flow/common.hpp"
#include "l1flow/energy.hpp"
#include "l1flow/grid.hpp"

using namespace l1flow;

namespace {

std::vector<IntegrandSpec> catalog() {
  return {IntegrandSpec::quadratic(),
          IntegrandSpec::aniso_norm(Norm::euclidean()),
          IntegrandSpec::aniso_norm(Norm::l1()),
          IntegrandSpec::aniso_norm(Norm::linf()),
          IntegrandSpec::aniso_norm(Norm::elliptic(1.0, 4.0)),
          IntegrandSpec::area(false),
          IntegrandSpec::area(true),
          IntegrandSpec::power(1.5),
          IntegrandSpec::power(3.0)};
}

GridFunction random_field(const GridGeometry& g, std::mt19937& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(g.node_count()), gh(g.ghost_count());
  for (double& x : v) x = d(rng);
  for (double& x : gh) x = d(rng);
  return GridFunction(g, v, gh);
}

}  // namespace

TEST_CASE("integrand values") {
  CHECK(eval_integrand(IntegrandSpec::quadratic(), {0, 0}) == 0.0);
  CHECK(eval_integrand(IntegrandSpec::quadratic(), {3, 4}) == doctest::Approx(12.5));
  CHECK(eval_integrand(IntegrandSpec::area(), {0, 0}) == 1.0);
  CHECK(eval_integrand(IntegrandSpec::aniso_norm(Norm::l1()), {3, -4}) == doctest::Approx(7.0));
  CHECK(eval_integrand(IntegrandSpec::power(3.0), {0, 2}) == doctest::Approx(8.0 / 3.0));
}

TEST_CASE("conjugates") {
  CHECK(eval_conjugate(IntegrandSpec::quadratic(), {1, 0}) == doctest::Approx(0.5));
  CHECK(eval_conjugate(IntegrandSpec::aniso_norm(Norm::euclidean()), {2, 0}) == kInfinity);
  CHECK(eval_conjugate(IntegrandSpec::aniso_norm(Norm::euclidean()), {0.6, 0.8}) == 0.0);
  CHECK(eval_conjugate(IntegrandSpec::area(), {0, 0}) == doctest::Approx(-1.0));
  CHECK(eval_conjugate(IntegrandSpec::area(), {1.5, 0}) == kInfinity);

  // area: sup_p q p - sqrt(1 + p^2) by a dense scan
  for (double q : {0.0, 0.3, -0.7}) {
    double best = -kInfinity;
    for (int k = -200000; k <= 200000; ++k) {
      const double p = k * 1e-4;
      best = std::max(best, q * p - std::sqrt(1 + p * p));
    }
    CHECK(eval_conjugate(IntegrandSpec::area(), {q, 0}) == doctest::Approx(best).epsilon(1e-7));
  }
}

TEST_CASE("prox of the conjugate") {
  const Vec2 a = prox_conjugate(IntegrandSpec::quadratic(), {2, 0}, 1.0);
  CHECK(a.x == doctest::Approx(1.0));
  CHECK(a.y == 0.0);
  const Vec2 b = prox_conjugate(IntegrandSpec::aniso_norm(Norm::euclidean()), {3, 4}, 0.7);
  CHECK(b.x == doctest::Approx(0.6));
  CHECK(b.y == doctest::Approx(0.8));

  // area: dense scan of |w - q|^2 / (2 sigma) + F*(w) over w in (-1, 1)
  const auto area = IntegrandSpec::area();
  const Vec2 c = prox_conjugate(area, {0.5, 0}, 0.2);
  CHECK(std::abs(c.x) < 1.0);
  double best_w = 0.0, best = kInfinity;
  for (int k = -999999; k <= 999999; ++k) {
    const double w = k * 1e-6;
    const double f = (w - 0.5) * (w - 0.5) / 0.4 - std::sqrt(1 - w * w);
    if (f < best) best = f, best_w = w;
  }
  CHECK(c.x == doctest::Approx(best_w).epsilon(1e-5));

  // every prox lands in the dual ball of a norm
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-5, 5);
  for (const auto& phi : {Norm::euclidean(), Norm::l1(), Norm::linf(), Norm::elliptic(2, 0.5)}) {
    for (int k = 0; k < 1000; ++k) {
      const Vec2 w = prox_conjugate(IntegrandSpec::aniso_norm(phi), {d(rng), d(rng)}, 0.5);
      CHECK(phi.dual(w) <= 1 + 1e-9);
    }
  }
}

TEST_CASE("Fenchel-Young on random pairs with equality at subgradients") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> d(-3, 3);
  for (const auto& spec : catalog()) {
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
      const Vec2 p{d(rng), d(rng)}, q{d(rng), d(rng)};
      const double c = eval_conjugate(spec, q);
      if (c == kInfinity) continue;
      worst = std::min(worst, eval_integrand(spec, p) + c - dot(p, q));
    }
    CHECK_MESSAGE(worst >= -1e-10, spec.name());
    if (spec.smooth()) {
      for (int k = 0; k < 1000; ++k) {
        const Vec2 p{d(rng), d(rng)};
        const Vec2 g = integrand_gradient(spec, p);
        const double gap = eval_integrand(spec, p) + eval_conjugate(spec, g) - dot(p, g);
        CHECK(std::abs(gap) <= 1e-10 * (1 + std::abs(eval_integrand(spec, p))));
      }
    }
  }
}

TEST_CASE("convexity and strong convexity of the integrands") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(-3, 3), th(0, 1);
  for (const auto& spec : catalog()) {
    for (int k = 0; k < 2000; ++k) {
      const Vec2 p{d(rng), d(rng)}, q{d(rng), d(rng)};
      const double t = th(rng);
      const Vec2 m = t * p + (1 - t) * q;
      CHECK(eval_integrand(spec, m) <= t * eval_integrand(spec, p) + (1 - t) * eval_integrand(spec, q) + 1e-12);
      if (spec.gamma > 0 && spec.smooth()) {
        const Vec2 g = integrand_gradient(spec, p);
        const Vec2 dq = q - p;
        CHECK(eval_integrand(spec, q) >=
              eval_integrand(spec, p) + dot(g, dq) + 0.5 * spec.gamma * dot(dq, dq) - 1e-12);
      }
    }
  }
}

TEST_CASE("energies") {
  const GridGeometry neu{8, 1, 0.125, Boundary::neumann};
  CHECK(eval_energy(IntegrandSpec::quadratic(), GridFunction::constant(neu, 3.0)) == 0.0);

  // u(x) = x on [0, 1] with the matching trace
  const GridGeometry dir{15, 1, 1.0 / 16, Boundary::dirichlet};
  const auto u = GridFunction::sample(dir, [](double x, double) { return x; });
  CHECK(eval_energy(IntegrandSpec::quadratic(), u) == doctest::Approx(0.5).epsilon(1e-14));

  // independent double loop on a 4x4 Neumann grid
  std::mt19937 rng(2);
  const GridGeometry g{4, 4, 0.25, Boundary::neumann};
  const auto w = random_field(g, rng);
  double direct = 0.0;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) {
      const double px = i + 1 < 4 ? (w.at(i + 1, j) - w.at(i, j)) / 0.25 : 0.0;
      const double py = j + 1 < 4 ? (w.at(i, j + 1) - w.at(i, j)) / 0.25 : 0.0;
      direct += 0.5 * (px * px + py * py);
    }
  direct *= 0.25 * 0.25;
  CHECK(std::abs(eval_energy(IntegrandSpec::quadratic(), w) - direct) <= 1e-13 * direct);
}

TEST_CASE("divergence is the negative adjoint of the gradient") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> d(-1, 1);
  for (const auto& g : {GridGeometry{17, 1, 0.1, Boundary::neumann}, GridGeometry{17, 1, 0.1, Boundary::dirichlet},
                        GridGeometry{9, 7, 0.2, Boundary::neumann}, GridGeometry{9, 7, 0.2, Boundary::dirichlet}}) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> u(g.node_count());
      for (double& x : u) x = d(rng);
      const GridFunction f(g, u, std::vector<double>(g.ghost_count(), 0.0));
      DualField z(g);
      for (double& x : z.data) x = d(rng);
      const auto p = gradient(f);
      double lhs = 0.0;
      for (std::size_t k = 0; k < p.data.size(); ++k) lhs += p.data[k] * z.data[k];
      lhs *= g.volume_element();
      const double rhs = -inner(u, divergence(z), g);
      CHECK(std::abs(lhs - rhs) <= 1e-13 * (1 + std::abs(lhs)));
    }
  }
}

TEST_CASE("subgradient certificates") {
  std::mt19937 rng(9);
  const GridGeometry g{12, 10, 0.1, Boundary::dirichlet};
  const auto u = random_field(g, rng);
  const auto quad = IntegrandSpec::quadratic();

  const auto zero = subgradient_from_dual(quad, DualField(g), u);
  CHECK(max_abs(zero.q) == 0.0);
  const auto p = gradient(u);
  double maxF = 0.0;
  for (std::size_t c = 0; c < p.cells(); ++c) maxF = std::max(maxF, cell_integrand(quad, &p.data[2 * c], 2));
  CHECK(zero.residual == doctest::Approx(maxF));

  const auto eq = subgradient_from_dual(quad, p, u);
  CHECK(std::abs(eq.residual) <= 1e-12);
  const auto lap = divergence(p);
  for (std::size_t i = 0; i < lap.size(); ++i) CHECK(eq.q[i] == doctest::Approx(-lap[i]).epsilon(1e-12));

  const auto tv = IntegrandSpec::aniso_norm(Norm::euclidean());
  DualField n = p;
  for (std::size_t c = 0; c < n.cells(); ++c) {
    const double len = std::hypot(n.data[2 * c], n.data[2 * c + 1]);
    REQUIRE(len > 0.0);
    n.data[2 * c] /= len;
    n.data[2 * c + 1] /= len;
  }
  CHECK(subgradient_from_dual(tv, n, u).residual <= 1e-10);
  CHECK(subgradient_from_dual(tv, smooth_dual(quad, u), u).min_residual >= -1e-10);
}

TEST_CASE("submodularity") {
  std::mt19937 rng(13);
  const GridGeometry g1{32, 1, 1.0 / 32, Boundary::neumann};
  const auto u = random_field(g1, rng);
  CHECK(check_submodularity(IntegrandSpec::quadratic(), u, u) == 0.0);
  std::vector<double> up(u.values().begin(), u.values().end());
  for (double& x : up) x += 0.5;
  CHECK(check_submodularity(IntegrandSpec::quadratic(), u, u.with_values(up)) == 0.0);

  double worst = -kInfinity;
  for (int k = 0; k < 1000; ++k) {
    const auto a = random_field(g1, rng);
    const auto b = random_field(g1, rng);
    for (const auto& spec : {IntegrandSpec::quadratic(), IntegrandSpec::area(), IntegrandSpec::power(3.0)})
      worst = std::max(worst, check_submodularity(spec, a, b));
  }
  CHECK(worst <= 1e-10);

  // separable norm on a 2D grid
  const GridGeometry g2{8, 8, 0.125, Boundary::neumann};
  for (int k = 0; k < 100; ++k)
    CHECK(check_submodularity(IntegrandSpec::aniso_norm(Norm::l1()), random_field(g2, rng), random_field(g2, rng)) <=
          1e-10);
}

TEST_CASE("energy convex along segments and strongly convex for the quadratic family") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> th(0, 1);
  const GridGeometry g{10, 10, 0.1, Boundary::neumann};
  for (const auto& spec : catalog()) {
    for (int k = 0; k < 50; ++k) {
      const auto a = random_field(g, rng), b = random_field(g, rng);
      const double t = th(rng);
      std::vector<double> m(g.node_count());
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = t * a[i] + (1 - t) * b[i];
      CHECK(eval_energy(spec, a.with_values(m)) <= t * eval_energy(spec, a) + (1 - t) * eval_energy(spec, b) + 1e-10);
    }
  }
  const auto quad = IntegrandSpec::quadratic();
  for (int k = 0; k < 50; ++k) {
    const auto a = random_field(g, rng), b = random_field(g, rng);
    const auto s = subgradient_from_dual(quad, smooth_dual(quad, a), a);
    std::vector<double> diff(g.node_count());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = b[i] - a[i];
    CHECK(eval_energy(quad, b) >=
          eval_energy(quad, a) + inner(s.q, diff, g) + 0.5 * gradient_distance_sq(a, b) - 1e-10);
  }
}

TEST_CASE("grid csv round trip") {
  std::mt19937 rng(19);
  for (const auto& g : {GridGeometry{5, 1, 0.2, Boundary::neumann}, GridGeometry{4, 3, 0.25, Boundary::dirichlet}}) {
    const auto u = random_field(g, rng);
    std::stringstream ss;
    write_csv(ss, u);
    const auto v = read_grid_csv(ss);
    CHECK(v.geometry() == g);
    CHECK(sup_distance(u, v) == 0.0);
    for (std::size_t k = 0; k < g.ghost_count(); ++k) CHECK(u.ghost()[k] == v.ghost()[k]);
  }
  std::stringstream bad("3,1,0.5,neumann\n1,2\n");
  CHECK_THROWS_AS(read_grid_csv(bad), Error);
}
