#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "l1flow/common.hpp"
#include "l1flow/geom.hpp"

using namespace l1flow;

namespace {

constexpr double kPi = std::numbers::pi;

const WulffShape& euclid() {
  static const WulffShape w = wulff_from_norm(Norm::euclidean(), 256);
  return w;
}

const ConvexPolygon kSquare = ConvexPolygon::rectangle(0, 0, 1, 1);

const Check* find_check(const Report& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return &c;
  return nullptr;
}

}  // namespace

TEST_CASE("polygon construction") {
  CHECK(kSquare.size() == 4);
  CHECK(kSquare.area() == doctest::Approx(1.0));
  CHECK(kSquare.diameter() == doctest::Approx(std::sqrt(2.0)));
  CHECK(kSquare.centroid().x == doctest::Approx(0.5));
  // repeated and collinear vertices are dropped
  const ConvexPolygon p({{0, 0}, {0.5, 0}, {1, 0}, {1, 0}, {1, 1}, {0, 1}});
  CHECK(p.size() == 4);
  CHECK_THROWS_AS(ConvexPolygon({{0, 0}, {0, 1}, {1, 1}, {1, 0}}), Error);              // clockwise
  CHECK_THROWS_AS(ConvexPolygon({{0, 0}, {2, 0}, {1, 0.2}, {2, 2}, {0, 2}}), Error);    // reflex vertex
  CHECK_THROWS_AS(ConvexPolygon({{0, 0}, {1, 0}, {2, 0}}), Error);                      // degenerate
  CHECK(kSquare.contains({0.5, 0.5}));
  CHECK_FALSE(kSquare.contains({1.1, 0.5}));
  CHECK(kSquare.contains({1.0 + 1e-12, 0.5}, 1e-9));
  CHECK(hausdorff_distance(kSquare, kSquare.translated({0.25, 0})) == doctest::Approx(0.25));
  CHECK(kSquare.scaled(2).area() == doctest::Approx(4.0));
}

TEST_CASE("Wulff shapes") {
  const auto l1 = wulff_from_norm(Norm::l1(), 64);
  CHECK(l1.polygon.size() == 4);
  CHECK(l1.area() == doctest::Approx(4.0).epsilon(1e-12));
  for (const Vec2 v : l1.polygon.vertices()) {
    CHECK(std::abs(std::abs(v.x) - 1) <= 1e-12);
    CHECK(std::abs(std::abs(v.y) - 1) <= 1e-12);
  }
  CHECK(aniso_perimeter(l1.polygon, l1) == doctest::Approx(8.0).epsilon(1e-12));

  const auto& e = euclid();
  CHECK(std::abs(e.area() - kPi) <= 1e-3);
  CHECK(aniso_perimeter(e.polygon, e) == doctest::Approx(2 * e.area()).epsilon(1e-12));
  CHECK(e.support_error <= 1e-3);
  CHECK(e.polygon.contains({0, 0}));

  const auto ell = wulff_from_norm(Norm::elliptic(1.0, 4.0), 256);
  CHECK(aniso_perimeter(ell.polygon, ell) == doctest::Approx(2 * ell.area()).epsilon(1e-9));
  // phi = sqrt(x^2 + 4 y^2) has the Wulff ellipse with semi-axes 1 and 2
  CHECK(ell.area() == doctest::Approx(2 * kPi).epsilon(1e-3));

  CHECK_THROWS_AS(wulff_from_norm(Norm::euclidean(), 8), Error);
}

TEST_CASE("perimeter, area and inradius") {
  CHECK(aniso_perimeter(kSquare, euclid()) == doctest::Approx(4.0));
  CHECK(area(kSquare) == doctest::Approx(1.0));
  CHECK(inradius(kSquare, euclid()) == doctest::Approx(0.5).epsilon(1e-9));
  const auto l1 = wulff_from_norm(Norm::l1(), 64);
  CHECK(aniso_perimeter(kSquare, l1) == doctest::Approx(4.0));
  CHECK(inradius(kSquare, l1) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::abs(aniso_perimeter(euclid().polygon, euclid()) - 2 * kPi) <= 1e-3);
  CHECK(support(kSquare, {1, 0}) == 1.0);
  CHECK(support(kSquare, {-1, 0}) == 0.0);
}

TEST_CASE("inner openings") {
  const auto& W = euclid();
  CHECK(hausdorff_distance(inner_opening(kSquare, 0.0, W), kSquare) <= 1e-12);
  const auto o = inner_opening(kSquare, 0.1, W);
  CHECK(std::abs(o.area() - (1 - (4 - kPi) * 0.01)) <= 1e-4);
  CHECK(std::abs(aniso_perimeter(o, W) - (4 - (8 - 2 * kPi) * 0.1)) <= 1e-4);
  CHECK(inner_opening(kSquare, 0.6, W).empty());
  CHECK(erosion(kSquare, 0.6, W).empty());
  const auto er = erosion(kSquare, 0.25, W);
  REQUIRE(er.size() == 4);
  for (const Vec2 v : er) CHECK(std::abs(std::abs(v.x - 0.5) - 0.25) <= 1e-12);

  // idempotence
  for (double r : {0.05, 0.2, 0.4}) {
    const auto a = inner_opening(kSquare, r, W);
    const auto b = inner_opening(a, r, W);
    CHECK(hausdorff_distance(a, b) <= 1e-9);
  }
  const auto tri = ConvexPolygon({{0, 0}, {3, 0}, {1, 2}});
  const auto a = inner_opening(tri, 0.3, W);
  CHECK(hausdorff_distance(a, inner_opening(a, 0.3, W)) <= 1e-9);
  // openings are nested
  const auto deeper = inner_opening(tri, 0.5, W);
  for (const Vec2 v : deeper.vertices()) CHECK(a.contains(v, 1e-9));
}

TEST_CASE("Cheeger sets") {
  const auto& W = euclid();
  const auto c = cheeger_scan(kSquare, W);
  const double r_exact = 1 / (2 + std::sqrt(kPi));
  CHECK(c.r == doctest::Approx(r_exact).epsilon(1e-3));
  CHECK(c.lambda == doctest::Approx(2 + std::sqrt(kPi)).epsilon(1e-3));
  CHECK(c.interior);
  CHECK(c.unimodal);
  CHECK(c.product == doctest::Approx(1.0).epsilon(2e-2));
  CHECK(cheeger_report(kSquare, W, c).pass());
  CHECK(cheeger_radius_condition(kSquare, W) == doctest::Approx(c.r).epsilon(1e-3));

  // a dense scan of the closed-form rounded-square ratio
  double best = kInfinity;
  for (int k = 1; k < 500000; ++k) {
    const double r = 0.5 * k / 500000.0;
    best = std::min(best, (4 - (8 - 2 * kPi) * r) / (1 - (4 - kPi) * r * r));
  }
  CHECK(c.lambda == doctest::Approx(best).epsilon(1e-3));

  // a disc is its own Cheeger set
  const auto disc = W.polygon.scaled(0.5);
  const auto d = cheeger_scan(disc, W);
  CHECK_FALSE(d.interior);
  CHECK(d.lambda == doctest::Approx(4.0).epsilon(1e-3));
  CHECK(hausdorff_distance(d.set, disc) <= 1e-9);
  CHECK(cheeger_report(disc, W, d).pass());

  // the anisotropic analogue: a scaled Wulff square for the l1 norm
  const auto l1 = wulff_from_norm(Norm::l1(), 64);
  const auto sq = cheeger_scan(l1.polygon.scaled(0.75), l1);
  CHECK(sq.lambda == doctest::Approx(2 / 0.75).epsilon(1e-3));
  CHECK(hausdorff_distance(sq.set, l1.polygon.scaled(0.75)) <= 1e-9);
}

TEST_CASE("geometric volume function") {
  const GeoVolumeFunction vf(kSquare, euclid());
  const auto s0 = vf.sample(0.0);
  CHECK(s0.r == 0.0);
  CHECK(s0.perimeter == doctest::Approx(4.0));
  const auto s = vf.sample((4 - kPi) * 0.01);
  CHECK(std::abs(s.r - 0.1) <= 1e-4);
  CHECK(std::abs(s.perimeter - (4 - (8 - 2 * kPi) * 0.1)) <= 1e-4);
  CHECK(s.lambda == doctest::Approx(1 / s.r));
  const double rs = vf.cheeger().r;
  CHECK(vf.cheeger_mass() == doctest::Approx((4 - kPi) * rs * rs).epsilon(1e-3));
  CHECK(vf.validate().pass());
  CHECK_THROWS_AS(vf.sample(vf.cheeger_mass() * 1.5), Error);
  CHECK_NOTHROW(vf.sample(vf.cheeger_mass() * 1.5, true));
}

TEST_CASE("geometric flow of the square") {
  const auto tr = geo_flow(kSquare, euclid(), 1e-4, 0.05);
  REQUIRE(tr.t_star > 0.0);
  const double rs = 1 / (2 + std::sqrt(kPi));
  // mass at the Cheeger time
  const auto it = std::find_if(tr.samples.begin(), tr.samples.end(),
                               [&](const GeoSample& g) { return g.t >= tr.t_star - 1e-12; });
  REQUIRE(it != tr.samples.end());
  CHECK(std::abs(1 - it->area - (4 - kPi) * rs * rs) <= 1e-3);
  CHECK(geo_trace_report(tr).pass());
  for (std::size_t n = 1; n < tr.samples.size(); ++n)
    if (tr.samples[n].regime == GeoRegime::opening) CHECK(tr.samples[n].lambda <= tr.samples[n - 1].lambda + 1e-9);
  CHECK(tr.terminal == "final-time");
}

TEST_CASE("ball law for the disc") {
  const auto tr = geo_flow(euclid().polygon, euclid(), 1e-3, 2.2);
  CHECK(tr.terminal == "extinction");
  CHECK(tr.uniqueness == "unique up to translations");
  CHECK(tr.t_max == doctest::Approx(2 * kPi / 3).epsilon(2e-3));
  const auto rep = ball_law_report(tr, 1.0);
  CHECK(rep.pass());
  CHECK(geo_trace_report(tr).pass());
  for (const auto& s : tr.samples) {
    if (s.r < 0.3) continue;
    const double R = std::cbrt(1 - 3 * s.t / (2 * kPi));
    CHECK(std::abs(s.r - R) <= 5e-3 * R);
  }
}

TEST_CASE("anisotropic flows stop at the Cheeger time") {
  const auto l1 = wulff_from_norm(Norm::l1(), 64);
  const auto tri = ConvexPolygon({{0, 0}, {2, 0}, {0.5, 1.5}});
  const auto tr = geo_flow(tri, l1, 1e-3, 10.0);
  CHECK(tr.terminal == "cheeger-arrest");
  CHECK(tr.uniqueness == "a limit flow");
  REQUIRE(tr.t_star > 0.0);
  CHECK(tr.samples.back().t == doctest::Approx(tr.t_star));
  CHECK(geo_trace_report(tr).pass());
  const auto c = cheeger_scan(tri, l1);
  CHECK(std::abs(tri.area() - tr.samples.back().area - (tri.area() - c.set.area())) <= 1e-6);
}

TEST_CASE("discrete ball steps") {
  const double tau = 1e-4;
  const double r = discrete_geo_step_ball(1.0, tau);
  CHECK(std::abs(r - (1 - tau / (2 * kPi))) <= 1e-9);
  CHECK(discrete_geo_step_ball(0.5, tau) < 0.5);

  const auto two = discrete_geo_step_balls({1.0, 0.5}, tau);
  CHECK(two.first == 1.0);
  CHECK(two.second < 0.5);
  CHECK(two.second == doctest::Approx(discrete_geo_step_ball(0.5, tau)).epsilon(1e-12));

  const auto eq = discrete_geo_step_balls({1.0, 1.0}, tau);
  CHECK(eq.first < 1.0);
  CHECK(eq.second == 1.0);

  const auto seq = ball_step_sequence({1.0, 1.0}, tau, 10);
  REQUIRE(seq.size() == 11);
  for (std::size_t n = 1; n < seq.size(); ++n) {
    const bool a = seq[n].first < seq[n - 1].first, b = seq[n].second < seq[n - 1].second;
    CHECK(a != b);
    CHECK(seq[n].first <= seq[n - 1].first);
    CHECK(seq[n].second <= seq[n - 1].second);
  }
  CHECK(ball_steps_report(seq, tau, 1e-12, 1e-7).pass());
  CHECK(ball_steps_report(ball_step_sequence({1.0, 0.0}, tau, 10), tau).pass());

  const auto tr = geo_ball_steps(1.0, tau, 5);
  CHECK(tr.mode == GeoMode::discrete_step);
  CHECK(tr.samples.size() == 6);

  // a corrupted sequence where both balls move is flagged
  auto both = seq;
  both[3].second -= 1e-6;
  const auto bad = ball_steps_report(both, tau, 1e-12, 1e-7);
  REQUIRE(find_check(bad, "one-ball-moves") != nullptr);
  CHECK_FALSE(find_check(bad, "one-ball-moves")->pass);
}

TEST_CASE("geometry serialization") {
  std::stringstream ss;
  write_polygon_csv(ss, euclid().polygon);
  const auto back = read_polygon_csv(ss);
  CHECK(hausdorff_distance(back, euclid().polygon) == 0.0);
  std::stringstream bad("x,y\n0,0\n1,oops\n");
  CHECK_THROWS_AS(read_polygon_csv(bad), Error);

  const auto tr = geo_ball_steps(1.0, 1e-4, 2);
  std::stringstream csv;
  write_geo_trace_csv(csv, tr);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "t,r,area,perimeter,lambda");
  CHECK(geo_metadata_json(tr).find("\"mode\": \"discrete-step\"") != std::string::npos);
}
