#include "l1flow/geom.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "json_io.hpp"
#include "l1flow/common.hpp"

namespace l1flow {

namespace {

constexpr double kPi = std::numbers::pi;

double extent(const std::vector<Vec2>& v) {
  if (v.empty()) return 0.0;
  double x0 = v[0].x, x1 = v[0].x, y0 = v[0].y, y1 = v[0].y;
  for (Vec2 p : v) {
    x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
  }
  return std::hypot(x1 - x0, y1 - y0);
}

double shoelace(const std::vector<Vec2>& v) {
  if (v.size() < 3) return 0.0;
  std::vector<double> terms(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) terms[i] = cross(v[i], v[(i + 1) % v.size()]);
  return 0.5 * tree_sum(terms);
}

// Removes near-repeated vertices, then vertices whose neighbouring edges are parallel.
std::vector<Vec2> simplify(std::vector<Vec2> v) {
  const double tol = 1e-11 * std::max(extent(v), 1e-300);
  bool changed = true;
  while (changed && v.size() > 1) {
    changed = false;
    std::vector<Vec2> out;
    for (Vec2 p : v)
      if (out.empty() || length(p - out.back()) > tol) out.push_back(p);
    while (out.size() > 1 && length(out.front() - out.back()) <= tol) out.pop_back();
    if (out.size() >= 3) {
      std::vector<Vec2> kept;
      const std::size_t n = out.size();
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = out[(i + n - 1) % n], b = out[i], c = out[(i + 1) % n];
        const Vec2 e1 = b - a, e2 = c - b;
        // a straight continuation, not a reversal
        if (std::abs(cross(e1, e2)) <= 1e-13 * length(e1) * length(e2) && dot(e1, e2) > 0.0) continue;
        kept.push_back(b);
      }
      out = std::move(kept);
    }
    changed = out.size() != v.size();
    v = std::move(out);
  }
  return v;
}

// Sutherland-Hodgman clip of a convex cycle by x . nu <= c.
std::vector<Vec2> clip(const std::vector<Vec2>& poly, Vec2 nu, double c, double eps) {
  std::vector<Vec2> out;
  const std::size_t n = poly.size();
  if (n == 0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = poly[i], q = poly[(i + 1) % n];
    const double sp = dot(nu, p) - c, sq = dot(nu, q) - c;
    const bool pin = sp <= eps, qin = sq <= eps;
    if (pin) out.push_back(p);
    if (pin != qin && n > 1) {
      const double t = sp / (sp - sq);
      out.push_back(p + t * (q - p));
    }
  }
  return out;
}

struct HalfPlane {
  Vec2 nu;  // outward unit normal
  double c;
};

std::vector<HalfPlane> half_planes(const ConvexPolygon& E) {
  std::vector<HalfPlane> out;
  const auto& v = E.vertices();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 e = v[(i + 1) % v.size()] - v[i];
    const double len = length(e);
    const Vec2 nu{e.y / len, -e.x / len};
    out.push_back({nu, dot(nu, v[i])});
  }
  return out;
}

std::vector<Vec2> intersect(const std::vector<HalfPlane>& planes, double box) {
  std::vector<Vec2> poly{{-box, -box}, {box, -box}, {box, box}, {-box, box}};
  const double eps = 1e-14 * box;
  for (const auto& hp : planes) {
    poly = clip(poly, hp.nu, hp.c, eps);
    if (poly.empty()) break;
  }
  return simplify(std::move(poly));
}

// Index of the lowest, then leftmost vertex.
std::size_t bottom(const std::vector<Vec2>& v) {
  std::size_t k = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i].y < v[k].y || (v[i].y == v[k].y && v[i].x < v[k].x)) k = i;
  return k;
}

double edge_angle(Vec2 e) {
  double a = std::atan2(e.y, e.x);
  if (a < 0.0) a += 2.0 * kPi;
  return a;
}

// Minkowski sum of a convex cycle (possibly a point or a segment) with a convex polygon, by merging
// edges in order of their direction angle.
std::vector<Vec2> minkowski(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.empty() || b.empty()) return {};
  if (a.size() == 1) {
    std::vector<Vec2> out;
    for (Vec2 p : b) out.push_back(p + a[0]);
    return out;
  }
  const std::size_t ia = bottom(a), ib = bottom(b);
  const std::size_t na = a.size(), nb = b.size();
  std::vector<Vec2> out{a[ia] + b[ib]};
  std::size_t i = 0, j = 0;
  while (i < na || j < nb) {
    const Vec2 ea = a[(ia + i + 1) % na] - a[(ia + i) % na];
    const Vec2 eb = b[(ib + j + 1) % nb] - b[(ib + j) % nb];
    const double ta = i < na ? edge_angle(ea) : kInfinity;
    const double tb = j < nb ? edge_angle(eb) : kInfinity;
    Vec2 step;
    if (std::abs(ta - tb) <= 1e-12) {
      step = ea + eb, ++i, ++j;
    } else if (ta < tb) {
      step = ea, ++i;
    } else {
      step = eb, ++j;
    }
    out.push_back(out.back() + step);
  }
  out.pop_back();  // closes onto the first vertex
  return simplify(std::move(out));
}

double cycle_perimeter(const std::vector<Vec2>& v, const Norm& phi) {
  if (v.size() < 2) return 0.0;
  std::vector<double> terms(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 e = v[(i + 1) % v.size()] - v[i];
    terms[i] = phi(Vec2{e.y, -e.x});
  }
  return tree_sum(terms);
}

}  // namespace

// ---------------------------------------------------------------------------

ConvexPolygon::ConvexPolygon(std::vector<Vec2> vertices) {
  for (Vec2 p : vertices) require(std::isfinite(p.x) && std::isfinite(p.y), "polygon vertices must be finite");
  auto v = simplify(std::move(vertices));
  require(v.size() >= 3, "polygon is degenerate");
  require(shoelace(v) > 0.0, "polygon vertices must be counterclockwise");
  const double scale = extent(v);
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e1 = v[(i + 1) % n] - v[i], e2 = v[(i + 2) % n] - v[(i + 1) % n];
    require(cross(e1, e2) > -1e-12 * scale * scale, "polygon is not convex");
  }
  // a convex turning sequence that winds once is simple
  double turning = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e1 = v[(i + 1) % n] - v[i], e2 = v[(i + 2) % n] - v[(i + 1) % n];
    turning += std::atan2(cross(e1, e2), dot(e1, e2));
  }
  require(std::abs(turning - 2.0 * kPi) < 1e-6, "polygon is not simple");
  vertices_ = std::move(v);
}

ConvexPolygon ConvexPolygon::rectangle(double x0, double y0, double x1, double y1) {
  require(x1 > x0 && y1 > y0, "rectangle corners must be ordered");
  return ConvexPolygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

ConvexPolygon ConvexPolygon::regular(int n, double radius, Vec2 center, double phase) {
  require(n >= 3, "a polygon needs at least three vertices");
  require(radius > 0.0, "radius must be positive");
  std::vector<Vec2> v;
  for (int k = 0; k < n; ++k) {
    const double a = phase + 2.0 * kPi * k / n;
    v.push_back(center + radius * Vec2{std::cos(a), std::sin(a)});
  }
  return ConvexPolygon(std::move(v));
}

double ConvexPolygon::area() const { return shoelace(vertices_); }

double ConvexPolygon::diameter() const {
  double d = 0.0;
  for (std::size_t i = 0; i < vertices_.size(); ++i)
    for (std::size_t j = i + 1; j < vertices_.size(); ++j) d = std::max(d, length(vertices_[i] - vertices_[j]));
  return d;
}

Vec2 ConvexPolygon::centroid() const {
  require(!empty(), "the empty body has no centroid");
  double a = 0.0, cx = 0.0, cy = 0.0;
  const auto& v = vertices_;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 p = v[i], q = v[(i + 1) % v.size()];
    const double w = cross(p, q);
    a += w, cx += (p.x + q.x) * w, cy += (p.y + q.y) * w;
  }
  return {cx / (3.0 * a), cy / (3.0 * a)};
}

bool ConvexPolygon::contains(Vec2 p, double tol) const {
  if (empty()) return false;
  for (const auto& hp : half_planes(*this))
    if (dot(hp.nu, p) > hp.c + tol) return false;
  return true;
}

ConvexPolygon ConvexPolygon::scaled(double s, Vec2 about) const {
  require(s > 0.0, "scale must be positive");
  std::vector<Vec2> v;
  for (Vec2 p : vertices_) v.push_back(about + s * (p - about));
  return ConvexPolygon(std::move(v));
}

ConvexPolygon ConvexPolygon::translated(Vec2 d) const {
  std::vector<Vec2> v;
  for (Vec2 p : vertices_) v.push_back(p + d);
  return ConvexPolygon(std::move(v));
}

double hausdorff_distance(const ConvexPolygon& a, const ConvexPolygon& b) {
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) return kInfinity;
  // distance from p to a convex polygon: 0 inside, else the nearest edge
  auto dist = [](Vec2 p, const ConvexPolygon& e) {
    if (e.contains(p)) return 0.0;
    double d = kInfinity;
    const auto& v = e.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vec2 s = v[i], t = v[(i + 1) % v.size()];
      const Vec2 st = t - s;
      const double w = std::clamp(dot(p - s, st) / dot(st, st), 0.0, 1.0);
      d = std::min(d, length(p - (s + w * st)));
    }
    return d;
  };
  double h = 0.0;
  for (Vec2 p : a.vertices()) h = std::max(h, dist(p, b));
  for (Vec2 p : b.vertices()) h = std::max(h, dist(p, a));
  return h;
}

// ---------------------------------------------------------------------------

WulffShape wulff_from_norm(const Norm& phi, int n_vertices) {
  require(n_vertices >= 16, "a Wulff shape needs at least 16 normals");
  std::vector<HalfPlane> planes;
  double top = 0.0;
  for (int k = 0; k < n_vertices; ++k) {
    const double a = 2.0 * kPi * k / n_vertices;
    const Vec2 nu{std::cos(a), std::sin(a)};
    const double c = phi(nu);
    require(std::isfinite(c) && c > 0.0, "degenerate norm: phi vanishes on a direction");
    planes.push_back({nu, c});
    top = std::max(top, c);
  }
  WulffShape w;
  w.polygon = ConvexPolygon(intersect(planes, 8.0 * top));
  w.phi = phi;
  w.n_vertices = n_vertices;
  const int probes = 16 * n_vertices;
  for (int k = 0; k < probes; ++k) {
    const double a = 2.0 * kPi * (k + 0.5) / probes;
    const Vec2 nu{std::cos(a), std::sin(a)};
    w.support_error = std::max(w.support_error, std::abs(support(w.polygon, nu) - phi(nu)));
  }
  return w;
}

ConvexPolygon wulff_ball(const WulffShape& W, double r, Vec2 center) {
  require(r > 0.0, "ball radius must be positive");
  return W.polygon.scaled(r).translated(center);
}

double support(const ConvexPolygon& E, Vec2 nu) {
  require(!E.empty(), "the empty body has no support function");
  double s = -kInfinity;
  for (Vec2 p : E.vertices()) s = std::max(s, dot(p, nu));
  return s;
}

double area(const ConvexPolygon& E) { return E.area(); }

double aniso_perimeter(const ConvexPolygon& E, const WulffShape& W) { return cycle_perimeter(E.vertices(), W.phi); }

std::vector<Vec2> erosion(const ConvexPolygon& E, double r, const WulffShape& W) {
  require(r >= 0.0 && std::isfinite(r), "erosion radius must be non-negative");
  if (E.empty()) return {};
  if (r == 0.0) return E.vertices();
  // shift by the support of the polygon W, not phi: then dilating back by rW gives an exact opening
  auto planes = half_planes(E);
  for (auto& hp : planes) hp.c -= r * support(W.polygon, hp.nu);
  double box = 0.0;
  for (Vec2 p : E.vertices()) box = std::max({box, std::abs(p.x), std::abs(p.y)});
  return intersect(planes, 2.0 * box + 1.0);
}

double inradius(const ConvexPolygon& E, const WulffShape& W) {
  require(!E.empty(), "the empty body has no inradius");
  const double diam = E.diameter();
  double lo = 0.0, hi = diam;
  while (!erosion(E, hi, W).empty()) lo = hi, hi *= 2.0;
  while (hi - lo > 1e-10 * diam) {
    const double mid = 0.5 * (lo + hi);
    (erosion(E, mid, W).empty() ? hi : lo) = mid;
  }
  return lo;
}

ConvexPolygon inner_opening(const ConvexPolygon& E, double r, const WulffShape& W) {
  require(r >= 0.0 && std::isfinite(r), "opening radius must be non-negative");
  if (E.empty() || r == 0.0) return E;
  const auto core = erosion(E, r, W);
  if (core.empty()) return {};
  return ConvexPolygon(minkowski(core, W.polygon.scaled(r).vertices()));
}

// ---------------------------------------------------------------------------

namespace {

double rho(const ConvexPolygon& E, double r, const WulffShape& W) {
  const auto F = inner_opening(E, r, W);
  return aniso_perimeter(F, W) / F.area();
}

}  // namespace

CheegerResult cheeger_scan(const ConvexPolygon& E, const WulffShape& W, int scan_points) {
  require(!E.empty(), "the Cheeger problem needs a non-empty body");
  require(scan_points >= 3, "the pre-scan needs at least three points");
  CheegerResult out;
  out.inradius = inradius(E, W);
  const double r0 = out.inradius;
  const auto n = static_cast<std::size_t>(scan_points);
  std::vector<double> values(n);
  parallel_for_chunked(n, [&](std::size_t k) { values[k] = rho(E, r0 * static_cast<double>(k + 1) / scan_points, W); });
  std::size_t best = 0;
  for (std::size_t k = 0; k < n; ++k) {
    out.scan.emplace_back(r0 * static_cast<double>(k + 1) / scan_points, values[k]);
    if (values[k] < values[best]) best = k;
  }
  // unimodal: no significant rise followed by a significant fall
  bool rising = false;
  for (std::size_t k = 1; k < n; ++k) {
    const double d = values[k] - values[k - 1];
    const double noise = 1e-10 * std::abs(values[k]);
    if (d > noise) rising = true;
    else if (d < -noise && rising) out.unimodal = false;
  }

  double a = best == 0 ? 0.0 : out.scan[best - 1].first;
  double b = best + 1 < n ? out.scan[best + 1].first : r0;
  // golden-section search on [a, b]
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = rho(E, x1, W), f2 = rho(E, x2, W);
  while (b - a > 1e-12 * r0) {
    if (f1 <= f2) {
      b = x2, x2 = x1, f2 = f1;
      x1 = b - g * (b - a);
      f1 = rho(E, x1, W);
    } else {
      a = x1, x1 = x2, f1 = f2;
      x2 = a + g * (b - a);
      f2 = rho(E, x2, W);
    }
  }
  double r = 0.5 * (a + b);
  double lambda = rho(E, r, W);
  if (values[best] < lambda) r = out.scan[best].first, lambda = values[best];
  const double at_r0 = rho(E, r0, W);
  // the Cheeger set is the largest minimiser
  out.interior = !(at_r0 <= lambda * (1.0 + 1e-9));
  if (!out.interior) r = r0, lambda = std::min(lambda, at_r0);
  out.r = r;
  out.lambda = lambda;
  out.set = inner_opening(E, r, W);
  out.product = r * lambda;
  return out;
}

double cheeger_radius_condition(const ConvexPolygon& E, const WulffShape& W) {
  const double r0 = inradius(E, W);
  const double wa = W.area();
  double lo = 0.0, hi = r0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * r0; ++it) {
    const double mid = 0.5 * (lo + hi);
    (shoelace(erosion(E, mid, W)) - mid * mid * wa > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Report cheeger_report(const ConvexPolygon& E, const WulffShape& W, const CheegerResult& c) {
  Report rep;
  rep.name = "cheeger";
  if (c.interior) {
    rep.add("curvature-identity", std::abs(c.product - 1.0), 2e-2);
  } else {
    rep.labels["curvature-identity"] = "not applicable: minimum at the inradius";
  }
  if (W.phi.kind() == NormKind::euclidean) {
    const double rc = cheeger_radius_condition(E, W);
    rep.add("closed-condition", std::abs(rho(E, rc, W) - c.lambda) / c.lambda, 1e-3);
    rep.metrics["closed_condition_r"] = rc;
  }
  rep.add("prescan-unimodal", c.unimodal ? 0.0 : 1.0, 0.0);
  rep.metrics["r_star"] = c.r;
  rep.metrics["lambda_star"] = c.lambda;
  rep.metrics["inradius"] = c.inradius;
  rep.metrics["product"] = c.product;
  return rep;
}

// ---------------------------------------------------------------------------

GeoVolumeFunction::GeoVolumeFunction(ConvexPolygon E0, WulffShape W) : e0_(std::move(E0)), w_(std::move(W)) {
  require(!e0_.empty(), "the volume function needs a non-empty body");
  cheeger_ = cheeger_scan(e0_, w_);
  area0_ = e0_.area();
  cheeger_mass_ = std::max(0.0, area0_ - cheeger_.set.area());
  inradius_mass_ = std::max(cheeger_mass_, mass_at(cheeger_.inradius));
}

double GeoVolumeFunction::mass_at(double r) const {
  if (r <= 0.0) return 0.0;
  return std::max(0.0, area0_ - inner_opening(e0_, r, w_).area());
}

GeoVolumeSample GeoVolumeFunction::sample(double m, bool beyond_cheeger) const {
  const double top = beyond_cheeger ? inradius_mass_ : cheeger_mass_;
  const double slack = 1e-12 * area0_;
  require(m >= 0.0 && m <= top + slack, "mass outside the window of the volume function");
  if (m <= 0.0) return {0.0, aniso_perimeter(e0_, w_), kInfinity, 0.0};
  double lo = 0.0, hi = beyond_cheeger ? cheeger_.inradius : cheeger_.r;
  if (m >= top) lo = hi;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * cheeger_.inradius; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass_at(mid) < m ? lo : hi) = mid;
  }
  const double r = 0.5 * (lo + hi);
  return {m, aniso_perimeter(inner_opening(e0_, r, w_), w_), 1.0 / r, r};
}

Report GeoVolumeFunction::validate(int samples, double tol) const {
  require(samples >= 3, "validation needs at least three samples");
  Report rep;
  rep.name = "geo-volume-function";
  std::vector<GeoVolumeSample> s(static_cast<std::size_t>(samples) + 1);
  parallel_for_chunked(s.size(), [&](std::size_t k) { s[k] = sample(cheeger_mass_ * static_cast<double>(k) / samples); });
  double chord = -kInfinity, mono = -kInfinity, sub = -kInfinity;
  long chord_at = -1, mono_at = -1, sub_at = -1;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    const double excess = s[i].perimeter - 0.5 * (s[i - 1].perimeter + s[i + 1].perimeter);
    if (excess > chord) chord = excess, chord_at = static_cast<long>(i);
    // -lambda_i is a subgradient at interior samples
    const double dm = s[i + 1].mass - s[i].mass;
    const double gap = s[i].perimeter - s[i].lambda * dm - s[i + 1].perimeter;
    if (gap > sub) sub = gap, sub_at = static_cast<long>(i);
  }
  for (std::size_t i = 2; i < s.size(); ++i)
    if (s[i].lambda - s[i - 1].lambda > mono) mono = s[i].lambda - s[i - 1].lambda, mono_at = static_cast<long>(i);
  if (cheeger_mass_ > 0.0) {
    rep.add("convexity-chord", chord, tol, chord_at);
    rep.add("multiplier-nonincreasing", mono, tol, mono_at);
    rep.add("subgradient-inequality", sub, tol, sub_at);
  } else {
    rep.labels["window"] = "empty: the body is its own Cheeger set";
  }
  rep.metrics["cheeger_mass"] = cheeger_mass_;
  return rep;
}

// ---------------------------------------------------------------------------

const char* to_string(GeoMode m) { return m == GeoMode::ode ? "ode" : "discrete-step"; }

const char* to_string(GeoRegime r) {
  switch (r) {
    case GeoRegime::opening:
      return "opening";
    case GeoRegime::post_cheeger:
      return "post-cheeger";
    case GeoRegime::stadium:
      return "stadium";
    case GeoRegime::ball:
      return "ball";
  }
  return "?";
}

namespace {

// Bisection on an increasing function over [lo, hi] with f(lo) < 0 <= f(hi).
template <class F>
double increasing_root(F&& f, double lo, double hi) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return hi;
}

}  // namespace

GeoTrace geo_flow(const ConvexPolygon& E0, const WulffShape& W, double dt, double T) {
  require(dt > 0.0 && std::isfinite(dt), "time step must be positive");
  require(T > 0.0 && std::isfinite(T), "final time must be positive");
  const bool isotropic = W.phi.kind() == NormKind::euclidean;
  const GeoVolumeFunction vf(E0, W);
  const auto& ch = vf.cheeger();
  const double area0 = E0.area();
  const double r0 = ch.inradius;
  const double wa = W.area();
  // Below this mass E0 counts as its own Cheeger set (resolution of the inradius bisection).
  const double negligible = 1e-9 * area0;
  const double m1 = vf.cheeger_mass() <= negligible ? 0.0 : vf.cheeger_mass();
  const double m2 = isotropic ? std::max(m1, vf.inradius_mass()) : m1;
  const auto core = erosion(E0, r0, W);
  const double core_area = E0.area() - vf.inradius_mass();  // |E^-_{r0}|
  const double m3 = isotropic ? std::max(m2, area0 - wa * r0 * r0) : m2;
  // the segment of the stadium regime: the two farthest points of the eroded core
  Vec2 seg_a = core.empty() ? E0.centroid() : core[0], seg_b = seg_a;
  for (Vec2 p : core)
    for (Vec2 q : core)
      if (length(p - q) > length(seg_a - seg_b)) seg_a = p, seg_b = q;
  const Vec2 mid = 0.5 * (seg_a + seg_b);

  GeoTrace tr;
  tr.mode = GeoMode::ode;
  tr.cheeger_mass = m1;
  tr.resolution = W.n_vertices;
  tr.uniqueness = isotropic ? "the limit flow" : "a limit flow";

  auto opening_sample = [&](double t, double r, GeoRegime regime) {
    GeoSample s;
    s.t = t, s.r = r, s.regime = regime;
    s.body = r > 0.0 ? inner_opening(E0, r, W) : E0;
    s.area = s.body.area();
    s.perimeter = aniso_perimeter(s.body, W);
    s.lambda = r > 0.0 ? 1.0 / r : kInfinity;
    return s;
  };
  auto stadium_sample = [&](double t, double m) {
    GeoSample s;
    s.t = t, s.r = r0, s.regime = GeoRegime::stadium;
    // the area of r0 W plus a segment is affine in the segment length
    const double w = core_area > wa * r0 * r0 ? std::clamp((area0 - m - wa * r0 * r0) / (core_area - wa * r0 * r0), 0.0, 1.0) : 0.0;
    std::vector<Vec2> seg{mid + w * (seg_a - mid), mid + w * (seg_b - mid)};
    if (w == 0.0) seg.pop_back();
    s.body = ConvexPolygon(minkowski(seg, W.polygon.scaled(r0).vertices()));
    s.area = s.body.area();
    s.perimeter = aniso_perimeter(s.body, W);
    s.lambda = 1.0 / r0;
    return s;
  };
  auto ball_sample = [&](double t, double R) {
    GeoSample s;
    s.t = t, s.r = R, s.regime = GeoRegime::ball;
    s.body = wulff_ball(W, R, mid);
    s.area = s.body.area();
    s.perimeter = aniso_perimeter(s.body, W);
    s.lambda = 1.0 / R;
    return s;
  };

  double t = 0.0, m = 0.0;
  if (m1 == 0.0) {
    tr.t_star = 0.0;
    if (!isotropic) {
      tr.samples.push_back(opening_sample(0.0, 0.0, GeoRegime::opening));
      tr.terminal = "cheeger-arrest";
      return tr;
    }
  }
  if (isotropic && m2 <= negligible && m3 <= negligible) {
    tr.samples.push_back(ball_sample(0.0, std::sqrt(area0 / wa)));
    tr.uniqueness = "unique up to translations";
  } else {
    tr.samples.push_back(opening_sample(0.0, 0.0, GeoRegime::opening));
  }

  while (t < T * (1.0 - 1e-12)) {
    double h = std::min(dt, T - t);
    const double m_prev = m;
    // An implicit step of length h lands on m1 exactly when h = r* (m1 - m); take that partial
    // step so the Cheeger time is a sample.
    if (m_prev < m1) {
      const double to_cheeger = ch.r * (m1 - m_prev);
      if (to_cheeger <= h) {
        h = to_cheeger;
        t += h;
        m = m1;
        tr.t_star = t;
        tr.samples.push_back(opening_sample(t, ch.r, GeoRegime::opening));
        if (!isotropic) {
          tr.terminal = "cheeger-arrest";
          return tr;
        }
        continue;
      }
      const double r = increasing_root([&](double x) { return vf.mass_at(x) - h / x - m_prev; }, 0.0, ch.r);
      t += h;
      m = vf.mass_at(r);
      tr.samples.push_back(opening_sample(t, r, GeoRegime::opening));
      continue;
    }
    t += h;
    if (m_prev < m2 && vf.mass_at(r0) - h / r0 >= m_prev) {
      const double r = increasing_root([&](double x) { return vf.mass_at(x) - h / x - m_prev; }, ch.r, r0);
      m = vf.mass_at(r);
      tr.samples.push_back(opening_sample(t, r, GeoRegime::post_cheeger));
      continue;
    }
    tr.uniqueness = "unique up to translations";
    if (m_prev < m3 && m_prev + h / r0 <= m3) {
      m = m_prev + h / r0;
      tr.samples.push_back(stadium_sample(t, m));
      continue;
    }
    // ball regime: |W| R^2 + h / R = A_prev, increasing in R above R_min
    const double a_prev = area0 - m_prev;
    const double r_min = std::cbrt(h / (2.0 * wa));
    const double r_top = std::min(r0, std::sqrt(a_prev / wa));
    if (r_top <= r_min || wa * r_min * r_min + h / r_min > a_prev) {
      const double R_prev = std::sqrt(a_prev / wa);
      tr.t_max = t - h + 2.0 * wa * R_prev * R_prev * R_prev / 3.0;
      GeoSample s;
      s.t = tr.t_max, s.r = 0.0, s.regime = GeoRegime::ball, s.lambda = kInfinity;
      tr.samples.push_back(s);
      tr.terminal = "extinction";
      return tr;
    }
    const double R = increasing_root([&](double x) { return wa * x * x + h / x - a_prev; }, r_min, r_top);
    m = area0 - wa * R * R;
    tr.samples.push_back(ball_sample(t, R));
  }
  tr.terminal = "final-time";
  return tr;
}

Report geo_trace_report(const GeoTrace& trace, double tol) {
  Report rep;
  rep.name = "geo-trace";
  const auto& s = trace.samples;
  double area_rise = -kInfinity, lam_rise = -kInfinity, per_rise = -kInfinity, nest = 0.0, integ = 0.0;
  long area_at = -1, lam_at = -1, per_at = -1, nest_at = -1, integ_at = -1;
  double integral = 0.0;
  for (std::size_t n = 1; n < s.size(); ++n) {
    const double da = s[n].area - s[n - 1].area;
    if (da > area_rise) area_rise = da, area_at = static_cast<long>(n);
    const double dp = s[n].perimeter - s[n - 1].perimeter;
    if (dp > per_rise) per_rise = dp, per_at = static_cast<long>(n);
    // lambda is monotone only along the openings
    const bool monotone_regime = s[n].regime == GeoRegime::opening || s[n].regime == GeoRegime::post_cheeger;
    if (monotone_regime && std::isfinite(s[n - 1].lambda)) {
      const double dl = s[n].lambda - s[n - 1].lambda;
      if (dl > lam_rise) lam_rise = dl, lam_at = static_cast<long>(n);
    }
    if (!s[n].body.empty() && !s[n - 1].body.empty()) {
      for (Vec2 p : s[n].body.vertices()) {
        double out = 0.0;
        const auto& v = s[n - 1].body.vertices();
        for (std::size_t i = 0; i < v.size(); ++i) {
          const Vec2 e = v[(i + 1) % v.size()] - v[i];
          out = std::max(out, cross(e, p - v[i]) / -length(e));
        }
        if (out > nest) nest = out, nest_at = static_cast<long>(n);
      }
    }
    if (std::isfinite(s[n].lambda)) {
      integral += (s[n].t - s[n - 1].t) * s[n].lambda;
      const double e = std::abs((s[0].area - s[n].area) - integral) / (1.0 + s[0].area);
      if (e > integ) integ = e, integ_at = static_cast<long>(n);
    }
  }
  if (s.size() > 1) {
    rep.add("area-decreasing", area_rise, 0.0, area_at);
    rep.add("perimeter-nonincreasing", per_rise, tol, per_at);
    if (lam_at >= 0) rep.add("multiplier-nonincreasing", lam_rise, tol, lam_at);
    rep.add("nested-bodies", nest, tol, nest_at);
    rep.add("integrated-multiplier", integ, 1e-8, integ_at);
  }
  rep.metrics["samples"] = static_cast<double>(s.size());
  rep.metrics["t_star"] = trace.t_star;
  rep.metrics["t_max"] = trace.t_max;
  rep.labels["terminal"] = trace.terminal;
  rep.labels["uniqueness"] = trace.uniqueness;
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

// Minimiser over [0, R] of 2 pi r + pi^2 (K + R^2 - r^2)^2 / (2 tau), the removed area of the other
// balls being pi K.
double ball_coordinate_step(double R, double K, double tau) {
  if (R <= 0.0) return 0.0;
  auto obj = [&](double r) {
    const double d = K + (R - r) * (R + r);
    return 2.0 * kPi * r + kPi * kPi * d * d / (2.0 * tau);
  };
  // stationarity: q(r) = (K + R^2 - r^2) r = tau / pi; local minima sit on the falling branch of q
  auto q = [&](double r) { return (K + (R - r) * (R + r)) * r; };
  const double target = tau / kPi;
  double best_r = 0.0, best = obj(0.0);
  auto consider = [&](double r) {
    const double v = obj(r);
    if (v < best || (v == best && r > best_r)) best = v, best_r = r;
  };
  consider(R);
  const double peak = std::min(R, std::sqrt((K + R * R) / 3.0));
  if (q(peak) > target && q(R) < target) {
    // Brent locates the basin; the objective is too flat near its minimiser for Brent alone to
    // reach full precision, so the stationarity equation is then solved by bracketing.
    const auto located = boost::math::tools::brent_find_minima(obj, peak, R, std::numeric_limits<double>::digits);
    double lo = peak, hi = R;
    const double guess = located.first;
    const double width = 1e-6 * R;
    if (guess - width > peak && q(guess - width) > target) lo = guess - width;
    if (guess + width < R && q(guess + width) < target) hi = guess + width;
    std::uintmax_t iters = 200;
    const auto root = boost::math::tools::toms748_solve([&](double r) { return target - q(r); }, lo, hi,
                                                        boost::math::tools::eps_tolerance<double>(), iters);
    consider(0.5 * (root.first + root.second));
  }
  return best_r;
}

double two_ball_objective(double R1, double R2, double r1, double r2, double tau) {
  const double d = (R1 - r1) * (R1 + r1) + (R2 - r2) * (R2 + r2);
  return 2.0 * kPi * (r1 + r2) + kPi * kPi * d * d / (2.0 * tau);
}

}  // namespace

double discrete_geo_step_ball(double R, double tau) {
  require(R >= 0.0 && std::isfinite(R), "radius must be non-negative");
  require(tau > 0.0 && std::isfinite(tau), "time step must be positive");
  return ball_coordinate_step(R, 0.0, tau);
}

std::pair<double, double> discrete_geo_step_balls(std::pair<double, double> radii, double tau) {
  const auto [R1, R2] = radii;
  require(R1 >= 0.0 && R2 >= 0.0 && std::isfinite(R1) && std::isfinite(R2), "radii must be non-negative");
  require(tau > 0.0 && std::isfinite(tau), "time step must be positive");
  if (R2 == 0.0) return {ball_coordinate_step(R1, 0.0, tau), 0.0};
  if (R1 == 0.0) return {0.0, ball_coordinate_step(R2, 0.0, tau)};

  // dense grid for the basin
  constexpr int kGrid = 65;
  double gr1 = R1, gr2 = R2, gbest = two_ball_objective(R1, R2, R1, R2, tau);
  for (int i = 0; i <= kGrid; ++i)
    for (int j = 0; j <= kGrid; ++j) {
      const double a = R1 * i / kGrid, b = R2 * j / kGrid;
      const double v = two_ball_objective(R1, R2, a, b, tau);
      if (v < gbest) gbest = v, gr1 = a, gr2 = b;
    }
  // Local refinement by exact coordinate minimisation from the grid point. Interior stationary points
  // are never minima (the perimeter term is concave along circles of constant removed area), so the
  // faces r1 = R1 and r2 = R2 are refined directly as well.
  std::vector<std::pair<double, double>> candidates;
  for (int pass = 0; pass < 100; ++pass) {
    const double n1 = ball_coordinate_step(R1, (R2 - gr2) * (R2 + gr2), tau);
    const double n2 = ball_coordinate_step(R2, (R1 - n1) * (R1 + n1), tau);
    const bool settled = std::abs(n1 - gr1) <= 1e-8 * R1 && std::abs(n2 - gr2) <= 1e-8 * R2;
    gr1 = n1, gr2 = n2;
    if (settled) break;
  }
  candidates.emplace_back(ball_coordinate_step(R1, 0.0, tau), R2);  // shrink the first ball
  candidates.emplace_back(R1, ball_coordinate_step(R2, 0.0, tau));  // shrink the second ball
  candidates.emplace_back(gr1, gr2);
  std::pair<double, double> best = candidates[0];
  double vbest = two_ball_objective(R1, R2, best.first, best.second, tau);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double v = two_ball_objective(R1, R2, candidates[k].first, candidates[k].second, tau);
    // candidates are listed in tie-break order, so only a strict improvement replaces the incumbent
    if (v < vbest - 1e-14 * std::abs(vbest)) vbest = v, best = candidates[k];
  }
  return best;
}

std::vector<std::pair<double, double>> ball_step_sequence(std::pair<double, double> radii, double tau, int steps) {
  require(steps >= 0, "step count must be non-negative");
  std::vector<std::pair<double, double>> seq{radii};
  for (int n = 0; n < steps; ++n) seq.push_back(discrete_geo_step_balls(seq.back(), tau));
  return seq;
}

GeoTrace geo_ball_steps(double R, double tau, int steps) {
  require(R > 0.0, "radius must be positive");
  const auto seq = ball_step_sequence({R, 0.0}, tau, steps);
  GeoTrace tr;
  tr.mode = GeoMode::discrete_step;
  tr.resolution = 256;
  tr.t_star = 0.0;
  tr.uniqueness = "unique up to translations";
  tr.terminal = "final-time";
  for (std::size_t n = 0; n < seq.size(); ++n) {
    GeoSample s;
    s.t = static_cast<double>(n) * tau;
    s.r = seq[n].first;
    s.regime = GeoRegime::ball;
    s.area = kPi * s.r * s.r;
    s.perimeter = 2.0 * kPi * s.r;
    s.lambda = n == 0 ? kInfinity : kPi * (seq[n - 1].first - s.r) * (seq[n - 1].first + s.r) / tau;
    if (s.r > 0.0) s.body = ConvexPolygon::regular(256, s.r);
    tr.samples.push_back(std::move(s));
    if (seq[n].first == 0.0) {
      tr.t_max = static_cast<double>(n) * tau;
      tr.terminal = "extinction";
      break;
    }
  }
  return tr;
}

Report ball_law_report(const GeoTrace& trace, double R0, double floor, double tol) {
  require(R0 > 0.0, "initial radius must be positive");
  Report rep;
  rep.name = "ball-law";
  double worst = 0.0;
  long at = -1, used = 0;
  for (std::size_t n = 0; n < trace.samples.size(); ++n) {
    const auto& s = trace.samples[n];
    const double cube = R0 * R0 * R0 - 3.0 * s.t / (2.0 * kPi);
    if (cube <= 0.0) break;
    const double R = std::cbrt(cube);
    if (R < floor * R0) break;
    // r is the opening radius before the ball regime, not a ball radius
    if (s.regime != GeoRegime::ball) continue;
    const double e = std::abs(s.r - R) / R;
    if (e > worst) worst = e, at = static_cast<long>(n);
    ++used;
  }
  rep.add("radius-relative-error", worst, tol, at);
  rep.metrics["samples_compared"] = static_cast<double>(used);
  return rep;
}

Report ball_steps_report(const std::vector<std::pair<double, double>>& seq, double tau, double tol,
                         double expansion_tol) {
  Report rep;
  rep.name = "ball-steps";
  double per = -kInfinity, holder = -kInfinity, expansion = 0.0, movers = 0.0, wrong = 0.0;
  long per_at = -1, holder_at = -1, exp_at = -1, movers_at = -1, wrong_at = -1;
  const double p0 = 2.0 * kPi * (seq.front().first + seq.front().second);
  auto removed = [&](std::size_t m, std::size_t n) {
    // nested balls: the symmetric difference is the area between them
    return kPi * ((seq[m].first - seq[n].first) * (seq[m].first + seq[n].first) +
                  (seq[m].second - seq[n].second) * (seq[m].second + seq[n].second));
  };
  for (std::size_t n = 1; n < seq.size(); ++n) {
    const auto [R1, R2] = seq[n - 1];
    const auto [r1, r2] = seq[n];
    const double d = 2.0 * kPi * ((r1 + r2) - (R1 + R2));
    if (d > per) per = d, per_at = static_cast<long>(n);
    for (std::size_t m = 0; m < n; ++m) {
      const double sym = removed(m, n);
      const double excess = sym * sym - 2.0 * tau * static_cast<double>(n - m) * p0;
      if (excess > holder) holder = excess, holder_at = static_cast<long>(n);
    }
    const int moved = (r1 < R1) + (r2 < R2);
    for (auto [R, r] : {std::pair{R1, r1}, std::pair{R2, r2}}) {
      if (r < R && r > 0.0) {
        const double e = std::abs(r - (R - tau / (2.0 * kPi * R * R)));
        if (e > expansion) expansion = e, exp_at = static_cast<long>(n);
      }
    }
    if (R1 > 0.0 && R2 > 0.0) {
      if (std::abs(moved - 1) > movers) movers = std::abs(moved - 1), movers_at = static_cast<long>(n);
      // the mover is the smaller ball, the first on ties
      const bool first_should_move = R1 <= R2;
      const bool ok = first_should_move ? (r1 < R1 && r2 == R2) : (r2 < R2 && r1 == R1);
      if (!ok && 1.0 > wrong) wrong = 1.0, wrong_at = static_cast<long>(n);
    }
  }
  if (seq.size() > 1) {
    rep.add("perimeter-nonincreasing", per, tol, per_at);
    rep.add("flat-holder", holder, tol, holder_at);
    rep.add("first-order-radius", expansion, expansion_tol, exp_at);
    if (seq.front().first > 0.0 && seq.front().second > 0.0) {
      rep.add("one-ball-moves", movers, 0.0, movers_at);
      rep.add("smaller-ball-moves", wrong, 0.0, wrong_at);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------

void write_polygon_csv(std::ostream& os, const ConvexPolygon& E) {
  os << "x,y\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Vec2 p : E.vertices()) os << p.x << ',' << p.y << '\n';
}

ConvexPolygon read_polygon_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("x,y", 0) != 0) fail(ErrorCode::io_error, "polygon CSV must start with x,y");
  std::vector<Vec2> v;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Vec2 p;
    char comma = 0;
    if (!(ls >> p.x >> comma >> p.y) || comma != ',') fail(ErrorCode::io_error, "malformed polygon row: " + line);
    v.push_back(p);
  }
  if (v.empty()) return {};
  return ConvexPolygon(std::move(v));
}

void write_geo_trace_csv(std::ostream& os, const GeoTrace& trace) {
  os << "t,r,area,perimeter,lambda\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& s : trace.samples) os << s.t << ',' << s.r << ',' << s.area << ',' << s.perimeter << ',' << s.lambda << '\n';
}

std::string geo_metadata_json(const GeoTrace& trace) {
  detail::Json j;
  j["resolution"] = trace.resolution;
  j["mode"] = to_string(trace.mode);
  j["t_star"] = detail::number(trace.t_star);
  j["t_max"] = detail::number(trace.t_max);
  j["cheeger_mass"] = detail::number(trace.cheeger_mass);
  j["terminal"] = trace.terminal;
  j["uniqueness"] = trace.uniqueness;
  j["samples"] = trace.samples.size();
  return j.dump(2);
}

}  // namespace l1flow
